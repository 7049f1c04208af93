"""Search desk-scale recipes for the Table-1 analogue criterion (scratch tool)."""
import dataclasses
import itertools
import json
import sys
import time

import numpy as np

from conrank.datasets import make_blobs, split_semi
from conrank.pipeline import TrainConfig, train_semisupervised
from conrank.metrics import EvaluatedSet, aurc, optimal_aurc
from conrank.consistency import consistency as cons_scores
from conrank.losses import LossWeights
import conrank.numerics as N


def em_pieces(rec, train, unl):
    logits, _ = N.forward(rec.model, train.features[unl])
    probs = N.softmax(logits)
    is_err = probs.argmax(1) != train.labels[unl]
    kappa = probs.max(1)
    c = cons_scores(rec.log).values[unl]

    def em(s):
        ev = EvaluatedSet(confidence=s, is_error=is_err)
        a, _ = aurc(ev)
        return a - optimal_aurc(ev)

    return em(kappa), em(c)


def crit5_wins(sep, sched, act, mom, wd, warm, lam2, bl, bu, n_seeds, data_mode):
    wins = 0
    ratios = []
    for seed in range(n_seeds):
        ds = 1 if data_mode == "fixed" else 100 + seed
        data = make_blobs(3, 500, 2, sep, seed=ds)
        train, test = split_semi(data, 0.1, 1.0 / 3.0, seed=ds)
        unl = np.flatnonzero(~train.labeled_mask)
        cfg = TrainConfig(epochs=200, seed=seed, lr_schedule=sched, weight_decay=wd,
                          momentum=mom, activation=act, warmup_epochs=warm,
                          labeled_batch=bl, unlabeled_batch=bu)
        rec_ce = train_semisupervised(dataclasses.replace(cfg, weights=LossWeights(0.0, 0.0)), train, test)
        rec_wr = train_semisupervised(dataclasses.replace(cfg, weights=LossWeights(0.0, lam2)), train, test)
        ek_ce, ec_ce = em_pieces(rec_ce, train, unl)
        ek_wr, ec_wr = em_pieces(rec_wr, train, unl)
        d_ce, d_wr = abs(ek_ce - ec_ce), abs(ek_wr - ec_wr)
        wins += d_wr <= 0.5 * d_ce
        ratios.append((round(d_ce, 4), round(d_wr, 4)))
    return wins, ratios


SCHEDS = {
    "hotmid": ((1, .1), (120, .02), (180, .002)),
    "hot150": ((1, .1), (150, .01), (185, .001)),
    "midlong": ((1, .05), (120, .01), (180, .001)),
    "hotconst": ((1, .1),),
    "mid": ((1, .05), (150, .005)),
}

space = []
for sep in (1.5, 2.0, 2.5):
    for sname in ("hotmid", "hot150", "midlong"):
        for act in ("tanh", "relu"):
            for mom in (0.0, 0.9):
                for wd in (0.0, 5e-4):
                    for warm in (0, 50):
                        for lam2 in (0.5,):
                            for bl, bu in ((32, 64),):
                                for dm in ("vary",):
                                    space.append((sep, sname, act, mom, wd, warm, lam2, bl, bu, dm))

rng = np.random.default_rng(7)
rng.shuffle(space)
t0 = time.time()
best = []
for combo in space:
    sep, sname, act, mom, wd, warm, lam2, bl, bu, dm = combo
    if time.time() - t0 > 3000:
        break
    wins, ratios = crit5_wins(sep, SCHEDS[sname], act, mom, wd, warm, lam2, bl, bu, 3, dm)
    line = {"combo": combo, "wins3": wins, "ratios": ratios}
    print(json.dumps(line), flush=True)
    if wins == 3:
        wins5, ratios5 = crit5_wins(sep, SCHEDS[sname], act, mom, wd, warm, lam2, bl, bu, 5, dm)
        print(json.dumps({"combo": combo, "WINS5": wins5, "ratios": ratios5}), flush=True)
        if wins5 >= 4:
            best.append(combo)
            if len(best) >= 3:
                break
print("BEST:", best)
