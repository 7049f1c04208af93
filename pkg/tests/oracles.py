"""Independent brute-force oracles used to check the library.

Everything here is written from the raw definitions with plain loops, on
purpose: these implementations must not share code or vectorization tricks
with the package.
"""

import math


def naive_forward(model, batch):
    """Triple-loop MLP forward pass."""
    rows = [list(map(float, row)) for row in batch]
    for layer in range(len(model.layer_sizes) - 1):
        w = model.weights[layer]
        b = model.biases[layer]
        out = []
        for row in rows:
            new = []
            for j in range(w.shape[1]):
                acc = b[j]
                for i in range(w.shape[0]):
                    acc += row[i] * w[i, j]
                new.append(acc)
            out.append(new)
        if layer < len(model.layer_sizes) - 2:
            if model.activation == "relu":
                rows = [[max(0.0, v) for v in row] for row in out]
            else:
                rows = [[math.tanh(v) for v in row] for row in out]
        else:
            rows = out
    return rows


def softmax_row(row):
    exps = [math.exp(v) for v in row]
    total = sum(exps)
    return [v / total for v in exps]


def replay_consistency(sequence):
    """Fraction of consecutive equal predictions in a full stored sequence."""
    if len(sequence) < 2:
        raise ValueError("need at least two epochs")
    agree = sum(1 for a, b in zip(sequence, sequence[1:]) if a == b)
    return agree / (len(sequence) - 1)


def pairwise_ranking_loss_naive(targets, scores):
    """Ordered-pair hinge, literal double loop."""
    n = len(targets)
    total = 0.0
    for s in range(n):
        for i in range(n):
            if targets[i] < targets[s]:
                term = (targets[s] - targets[i]) - (scores[s] - scores[i])
                if term > 0.0:
                    total += term
    return total


def cyclic_pairs_from_full_loss(targets, scores):
    """Ordered-pair hinge restricted to the cyclic successor pair set."""
    n = len(targets)
    total = 0.0
    for s in range(n):
        t = (s + 1) % n
        hi, lo = (s, t) if targets[s] > targets[t] else (t, s)
        if targets[lo] < targets[hi]:
            term = (targets[hi] - targets[lo]) - (scores[hi] - scores[lo])
            if term > 0.0:
                total += term
    return total


def theta_sweep_aurc(confidence, is_error):
    """AURC as mean selective risk over the distinct-threshold set."""
    m = len(confidence)
    thetas = sorted(set(confidence))
    total = 0.0
    for theta in thetas:
        selected = [i for i in range(m) if confidence[i] >= theta]
        risk = sum(1 for i in selected if is_error[i]) / len(selected)
        total += risk
    return total / m


def prefix_aurc_of_order(order, is_error):
    total = 0.0
    errs = 0
    for j, idx in enumerate(order, start=1):
        errs += bool(is_error[idx])
        total += errs / j
    return total / len(order)


def optimal_aurc_naive(is_error):
    order = sorted(range(len(is_error)), key=lambda i: bool(is_error[i]))
    return prefix_aurc_of_order(order, is_error)


def ece_naive(confidence, is_error, n_bins):
    """Loop-over-bins calibration gap; right-closed bins, 0 in the first."""
    m = len(confidence)
    total = 0.0
    for b in range(n_bins):
        lo = b / n_bins
        hi = (b + 1) / n_bins
        members = [
            i
            for i in range(m)
            if (confidence[i] > lo or (b == 0 and confidence[i] == 0.0)) and confidence[i] <= hi
        ]
        if not members:
            continue
        acc = sum(1 for i in members if not is_error[i]) / len(members)
        mean_conf = sum(confidence[i] for i in members) / len(members)
        total += (len(members) / m) * abs(acc - mean_conf)
    return total


def nll_naive(probs, labels):
    return sum(-math.log(probs[i][labels[i]]) for i in range(len(labels))) / len(labels)


def brier_naive(probs, labels):
    m = len(labels)
    total = 0.0
    for i in range(m):
        for k in range(len(probs[i])):
            target = 1.0 if labels[i] == k else 0.0
            total += (probs[i][k] - target) ** 2
    return total / m


def fpr95_naive(confidence, is_error):
    positives = [i for i in range(len(confidence)) if not is_error[i]]
    negatives = [i for i in range(len(confidence)) if is_error[i]]
    for theta in sorted(set(confidence), reverse=True):
        tp = sum(1 for i in positives if confidence[i] >= theta)
        if tp / len(positives) >= 0.95:
            if not negatives:
                return 0.0
            fp = sum(1 for i in negatives if confidence[i] >= theta)
            return fp / len(negatives)
    raise AssertionError("unreachable")


def auroc_pairwise(in_scores, out_scores):
    wins = 0.0
    for a in in_scores:
        for b in out_scores:
            if a > b:
                wins += 1.0
            elif a == b:
                wins += 0.5
    return wins / (len(in_scores) * len(out_scores))


def detection_error_naive(in_scores, out_scores):
    best = 0.5
    for theta in sorted(set(list(in_scores) + list(out_scores))):
        tpr = sum(1 for v in in_scores if v >= theta) / len(in_scores)
        fpr = sum(1 for v in out_scores if v >= theta) / len(out_scores)
        best = min(best, 0.5 * (1 - tpr) + 0.5 * fpr)
    return best


def finite_difference(f, x, step=1e-5):
    """Central-difference gradient of a scalar function of a flat array."""
    grad = []
    for i in range(len(x)):
        up = list(x)
        down = list(x)
        up[i] += step
        down[i] -= step
        grad.append((f(up) - f(down)) / (2 * step))
    return grad


def relative_error(a, b, floor=1e-12):
    """Max-norm relative disagreement between two gradient arrays."""
    num = max(abs(x - y) for x, y in zip(a, b)) if len(a) else 0.0
    den = max([abs(v) for v in a] + [abs(v) for v in b] + [floor])
    return num / den
