"""Built-in verification suite behind the `selfcheck` CLI command.

Runs finite-difference gradient checks on every primitive op and loss term,
plus oracle comparisons for Hamming arithmetic, packing, AP, and FPR@TPR.
Independent of the pytest suite so a deployed install can verify itself.
"""

from __future__ import annotations

import numpy as np

from . import losses as L
from . import tensor as T
from .evaluate import average_precision, fpr_at_tpr
from .quantize import BitMatrix, hamming_from_dot, hamming_search, sign_vec
from .tensor import Tensor


def fd_gradient(fn, x, h=1e-5):
    """Central finite differences of a scalar fn at x (elementwise)."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn(x)
        flat[i] = orig - h
        fm = fn(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b, floor=1e-8):
    return float(np.max(np.abs(a - b) / (np.abs(b) + floor)))


def check_gradient(fn_tensor, x0, tol=1e-5, h=1e-5):
    """Compare reverse-mode grad of fn_tensor against finite differences."""
    x = Tensor(np.array(x0, dtype=np.float64), requires_grad=True)
    out = fn_tensor(x)
    T.backward(out)
    analytic = x.grad.copy()
    fd = fd_gradient(lambda v: float(fn_tensor(Tensor(v)).data),
                     np.array(x0, dtype=np.float64), h=h)
    err = rel_err(analytic, fd)
    return err < tol, err


def _grad_cases(rng):
    gamma = 0.001
    b = rng.standard_normal((4, 3))
    w = 0.3 * rng.standard_normal((2, 3, 3, 3))
    bh = sign_vec(rng.standard_normal((4, 12))).astype(np.float64)
    cases = {
        "matmul": lambda x: T.sum_(T.square(T.matmul(x, Tensor(b.T)))),
        "conv2d": lambda x: T.sum_(T.square(T.conv2d(x, Tensor(w), stride=1, pad=1))),
        "leaky_relu": lambda x: T.sum_(T.square(T.leaky_relu(x, 0.2))),
        "tanh": lambda x: T.sum_(T.square(T.tanh(x))),
        "sigmoid": lambda x: T.sum_(T.square(T.sigmoid(x))),
        "softplus": lambda x: T.sum_(T.square(T.softplus(x))),
        "softsign": lambda x: T.sum_(T.square(T.softsign(x, 0.01))),
        "abs": lambda x: T.sum_(T.square(T.abs_(x) + 0.7)),
        "exp": lambda x: T.sum_(T.exp(x)),
        "mean": lambda x: T.square(T.mean(x)),
        "square": lambda x: T.sum_(T.square(x)),
        "avg_pool": lambda x: T.sum_(T.square(T.avg_pool_global(T.reshape(x, (2, 2, 3, 1))))),
        "upsample2x": lambda x: T.sum_(T.square(T.upsample2x(T.reshape(x, (1, 1, 3, 4))))),
        "loss_dmr": lambda x: L.loss_dmr(bh, x),
        "loss_me": lambda x: L.loss_me(x),
        "loss_ac": lambda x: L.loss_ac(x),
        "loss_mac": lambda x: L.loss_mac(x, bh, 0.5),
        "loss_fm": lambda x, c=Tensor(rng.standard_normal((4, 3))):
            L.loss_feature_matching(c, x),
        "loss_gan_d": lambda x, c=Tensor(rng.standard_normal((4, 1))):
            L.loss_gan_d(x, c),
    }
    shapes = {"conv2d": (1, 3, 4, 4), "avg_pool": (2, 2, 3), "upsample2x": (3, 4),
              "loss_gan_d": (4, 1)}
    return cases, shapes


def run_gradient_checks(points_per_op=3, tol=1e-4, seed=7):
    rng = np.random.default_rng(seed)
    cases, shapes = _grad_cases(rng)
    results = []
    for name, fn in cases.items():
        worst = 0.0
        for _ in range(points_per_op):
            shape = shapes.get(name, (4, 3))
            x0 = rng.standard_normal(shape)
            if name == "abs":
                x0 += np.sign(x0) * 0.2  # keep away from the kink
            _, err = check_gradient(fn, x0, tol=tol)
            worst = max(worst, err)
        results.append((f"grad/{name}", worst < tol, f"rel-err {worst:.3g}"))
    return results


def run_oracle_checks(seed=11):
    rng = np.random.default_rng(seed)
    results = []

    # hamming_from_dot vs popcount-of-XOR
    codes = sign_vec(rng.standard_normal((200, 64)))
    ok = True
    for _ in range(500):
        i, j = rng.integers(0, 200, size=2)
        dot = int(codes[i].astype(int) @ codes[j].astype(int))
        naive = int((codes[i] != codes[j]).sum())
        if hamming_from_dot(dot, 64) != naive:
            ok = False
            break
    results.append(("oracle/hamming_from_dot", ok, "popcount-XOR equivalence"))

    # pack/unpack round trip + search vs naive ranking
    bm = BitMatrix.pack(codes)
    results.append(("oracle/pack_roundtrip", np.array_equal(bm.unpack(), codes),
                    "pack/unpack identity"))
    q = bm.row(0)
    idx, dist = hamming_search(q, bm, 50)
    naive_d = (codes != codes[0]).sum(axis=1)
    naive_idx = np.argsort(naive_d, kind="stable")[:50]
    results.append(("oracle/hamming_search",
                    np.array_equal(idx, naive_idx)
                    and np.array_equal(dist, naive_d[naive_idx]),
                    "naive per-bit ranking"))

    # pairwise losses vs explicit double loops
    n, k, m = 6, 5, 16
    sf = rng.uniform(-0.99, 0.99, size=(n, k))
    bh = sign_vec(rng.standard_normal((n, m))).astype(np.float64)
    dmr = 0.0
    ac = 0.0
    alpha = np.zeros((n, n))
    for a in range(n):
        for bx in range(n):
            if a == bx:
                continue
            dmr += abs(bh[a] @ bh[bx] / m - sf[a] @ sf[bx] / k)
            ac += abs(sf[a] @ sf[bx]) / k
            alpha[a, bx] = np.exp(-abs(bh[a] @ bh[bx]) / (0.5 * m))
    dmr /= n * (n - 1)
    ac /= n * (n - 1)
    mac = 0.0
    for a in range(n):
        for bx in range(n):
            if a != bx:
                mac += alpha[a, bx] / alpha.sum() * abs(sf[a] @ sf[bx]) / k
    results.append(("oracle/loss_dmr",
                    abs(float(L.loss_dmr(bh, Tensor(sf)).data) - dmr) < 1e-12,
                    "pairwise-loop"))
    results.append(("oracle/loss_ac",
                    abs(float(L.loss_ac(Tensor(sf)).data) - ac) < 1e-12,
                    "pairwise-loop"))
    results.append(("oracle/loss_mac",
                    abs(float(L.loss_mac(Tensor(sf), bh, 0.5).data) - mac) < 1e-12,
                    "pairwise-loop"))

    # AP against brute-force definition
    labels_db = rng.integers(0, 3, size=30)
    codes_db = sign_vec(rng.standard_normal((30, 16)))
    db = BitMatrix.pack(codes_db)
    d = (codes_db != codes_db[0]).sum(axis=1)
    order = np.argsort(d, kind="stable")
    ranked = labels_db[order]
    brute = 0.0
    hits = 0
    n_rel = int((labels_db == labels_db[0]).sum())
    for i, lab in enumerate(ranked[:10]):
        if lab == labels_db[0]:
            hits += 1
            brute += hits / (i + 1)
    brute /= min(n_rel, 10)
    got = average_precision(labels_db[0], ranked, 10, n_rel)
    results.append(("oracle/average_precision", abs(got - brute) < 1e-12, "brute force"))

    # FPR@TPR against a threshold sweep
    dm = rng.integers(0, 20, size=40)
    dn = rng.integers(5, 30, size=40)
    rep = fpr_at_tpr(dm, dn, 0.95)
    best = None
    for t in range(0, 31):
        if (dm <= t).mean() >= 0.95:
            best = t
            break
    ok = rep.threshold == best and abs(rep.fpr_at_95 - (dn <= best).mean()) < 1e-12
    results.append(("oracle/fpr_at_tpr", ok, "threshold sweep"))
    return results


def run_all(points_per_op=3):
    results = run_gradient_checks(points_per_op=points_per_op) + run_oracle_checks()
    return [(name, bool(ok), detail) for name, ok, detail in results]
