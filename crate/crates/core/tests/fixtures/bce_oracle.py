"""Reference BCE values at 50 significant digits for the acceptance tests."""
from mpmath import mp, mpf, exp, log

mp.dps = 50
CLAMP = mpf(1e-7)
# upper bound as the f64 the library computes
UPPER = mpf(1.0 - 1e-7)


def bce(probs, labels):
    total = mpf(0)
    for p, y in zip(probs, labels):
        p = min(max(p, CLAMP), UPPER)
        total += -log(p) if y else -log(1 - p)
    return total / len(probs)


def sigmoid(z):
    return 1 / (1 + exp(-z))


probs = [0.9, 0.1, 0.73, 0.2, 0.5, 0.999, 1e-3, 0.0, 1.0, 0.6180339887]
plabels = [1, 0, 1, 1, 0, 1, 0, 1, 0, 0]
print("probs", mp.nstr(bce([mpf(p) for p in probs], plabels), 30))

logits = [-8.0, -3.5, -1.25, -0.1, 0.0, 0.3, 1.7, 2.9, 5.5, 8.0]
llabels = [0, 1, 0, 1, 1, 0, 1, 1, 0, 1]
s = [sigmoid(mpf(z)) for z in logits]
print("logits", mp.nstr(bce(s, llabels), 30))
print("grads", [mp.nstr((p - y) / len(s), 25) for p, y in zip(s, llabels)])

grid = [(i + 0.5) / 1000 for i in range(1000)]
glabels = [1 if i % 3 == 0 else 0 for i in range(1000)]
print("grid", mp.nstr(bce([mpf(p) for p in grid], glabels), 30))
