"""High-precision reference values frozen into the Rust tests.

Run with `python3 golden.py`; prints Rust-ready literals.
"""
from mpmath import mp, mpf, exp, log, sqrt

mp.dps = 50


def soft_and(a, b, p):
    return log(exp(p * a) + exp(p * b)) / p


def soft_or(a, b, p):
    return -soft_and(-a, -b, p)


def d_soft_and(a, b, p):
    ea, eb = exp(p * a), exp(p * b)
    return ea / (ea + eb), eb / (ea + eb)


def stl(kind, values, nu):
    rho = [-mpf(v) for v in values]
    ext = min(rho) if kind == "conj" else max(rho)
    if ext == 0:
        return mpf(0)
    t = [(r - ext) / ext for r in rho]
    attracting = ext < 0 if kind == "conj" else ext > 0
    if attracting:
        num = sum(ext * exp(ti) * exp(nu * ti) for ti in t)
        den = sum(exp(nu * ti) for ti in t)
    else:
        num = sum(r * exp(-nu * ti) for r, ti in zip(rho, t))
        den = sum(exp(-nu * ti) for ti in t)
    return -(num / den)


def show(name, v):
    print(f"{name} = {mp.nstr(v, 17)}")


show("qll_and_p5_0.3_-0.2", soft_and(mpf("0.3"), mpf("-0.2"), 5))
show("qll_or_p2_1.5_-0.5", soft_or(mpf("1.5"), mpf("-0.5"), 2))
show("qll_and_p1_0_0", soft_and(mpf(0), mpf(0), 1))
da, db = d_soft_and(mpf("0.7"), mpf("-1.1"), 2)
show("dqll_and_p2_a", da)
show("dqll_and_p2_b", db)
show("yager2_implies_0.9_0.6", 1 - sqrt(mpf("0.4") ** 2 - mpf("0.1") ** 2))
show("yager3_not_0.5", (1 - mpf("0.5") ** 3) ** (mpf(1) / 3))
show("yager2.5_tnorm_0.8_0.9", max(1 - (mpf("0.2") ** mpf("2.5") + mpf("0.1") ** mpf("2.5")) ** (1 / mpf("2.5")), 0))
show("stl_conj_nu5_1_2", stl("conj", [1, 2], 5))
show("stl_disj_nu5_1_2", stl("disj", [1, 2], 5))
show("stl_conj_nu2_-1_-3_0.5", stl("conj", [-1, -3, mpf("0.5")], 2))
show("stl_disj_nu1_-1_-3_0.5", stl("disj", [-1, -3, mpf("0.5")], 1))
show("stl_conj_nu5_abc", stl("conj", [1, 2, 3], 5))
show("stl_conj_nu5_ab_c", stl("conj", [stl("conj", [1, 2], 5), 3], 5))
