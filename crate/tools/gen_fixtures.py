"""Regenerates fixtures/*.tsv with sympy.

Every value is computed from F and φ by exact symbolic differentiation and
evaluated at rational points; for the three-dimensional example the same
quantities are also compared against hand-derived closed forms before being
written.
"""
import sympy as sp
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "fixtures"
TOL = "1e-8"


def fmt(v):
    return repr(float(sp.N(v, 30)))


def objects(F2, xs, ys, phi):
    n = len(xs)
    g = sp.Matrix(n, n, lambda i, j: sp.diff(F2, ys[i], ys[j]) / 2)
    ginv = g.inv()
    C = [[[sp.diff(F2, ys[i], ys[j], ys[k]) / 4 for k in range(n)] for j in range(n)] for i in range(n)]
    rhs = [sum(ys[k] * sp.diff(F2, ys[l], xs[k]) for k in range(n)) - sp.diff(F2, xs[l]) for l in range(n)]
    G = [sum(ginv[i, l] * rhs[l] for l in range(n)) / 4 for i in range(n)]
    N = [[sp.diff(G[i], ys[j]) for j in range(n)] for i in range(n)]

    def delta(f, j):
        return sp.diff(f, xs[j]) - sum(N[m][j] * sp.diff(f, ys[m]) for m in range(n))

    def gamma(i, j, k):
        return sum(
            ginv[i, s] * (delta(g[s, k], j) + delta(g[j, s], k) - delta(g[j, k], s)) for s in range(n)
        ) / 2

    Phi = sum(g[i, j] * phi[i] * ys[j] for i in range(n) for j in range(n))
    p2 = sum(g[i, j] * phi[i] * phi[j] for i in range(n) for j in range(n))
    return g, ginv, C, G, gamma, Phi, p2


def change_scalars(F, Phi, p2, sign):
    Phi = sign * Phi
    p2 = p2
    m = F * (1 + 2 * p2) - 3 * Phi
    return {
        "margin": m,
        "f1": F * (4 * Phi - F) / m,
        "f2": 2 * F**3 / m,
        "Fhat": F**2 / (F - Phi),
    }


def write(name, rows):
    lines = ["# name\tx\ty\tvalue\ttolerance\tkind"]
    for r in rows:
        lines.append("\t".join(r))
    (OUT / f"{name}.tsv").write_text("\n".join(lines) + "\n")


def example():
    x1, x2, x3, y1, y2, y3 = sp.symbols("x1 x2 x3 y1 y2 y3", real=True, nonzero=True)
    xs, ys = [x1, x2, x3], [y1, y2, y3]
    F2 = x3**2 * ((x1**2 * y2**2 + 2 * y1 * y2) / y1) ** 2 + y3**2
    F = sp.sqrt(F2)
    phi = [0, 0, x3]
    g, ginv, C, G, gamma, Phi, p2 = objects(F2, xs, ys, phi)

    D = x1**6 * y2**3 + 6 * x1**4 * y1 * y2**2 + 12 * x1**2 * y1**2 * y2 + 8 * y1**3
    K = 6 * x1**2 * x3**2 * (x1**2 * y2 + y1)
    closed = {
        "g_11": x3**2 * x1**2 * y2**3 * (3 * x1**2 * y2 + 4 * y1) / y1**4,
        "g_12": -2 * x1**2 * x3**2 * y2**2 * (2 * x1**2 * y2 + 3 * y1) / y1**3,
        "g_22": 2 * x3**2 * (3 * x1**4 * y2**2 + 6 * x1**2 * y1 * y2 + 2 * y1**2) / y1**2,
        "g_33": sp.Integer(1),
        "ginv_11": (3 * x1**4 * y2**2 + 6 * x1**2 * y1 * y2 + 2 * y1**2) * y1**4 / (x3**2 * x1**2 * y2**3 * D),
        "ginv_12": (2 * x1**2 * y2 + 3 * y1) * y1**3 / (x3**2 * y2 * D),
        "ginv_22": (3 * x1**2 * y2 + 4 * y1) * y1**2 / (2 * x3**2 * D),
        "ginv_33": sp.Integer(1),
        "C_111": -K * y2**3 / y1**5,
        "C_112": K * y2**2 / y1**4,
        "C_122": -K * y2 / y1**3,
        "C_222": K / y1**2,
        "G_1": (x1 * y3 - x3 * y1) * y1 / (x1 * x3),
        "G_2": y2 * y3 / x3,
        "G_3": -x3 * y2**2 * (x1**4 * y2**2 + 4 * x1**2 * y1 * y2 + 4 * y1**2) / (2 * y1**2),
        "Gamma_1_13": 1 / x3,
        "Gamma_2_23": 1 / x3,
        "Gamma_3_33": sp.Integer(0),
        "theta": (x3 / y1) ** 2,
        "a_11": x1**2 * y2**3 * (3 * x1**2 * y2 + 4 * y1) / y1**2,
        "a_12": -2 * x1**2 * y2**2 * (2 * x1**2 * y2 + 3 * y1) / y1,
        "a_22": 2 * (3 * x1**4 * y2**2 + 6 * x1**2 * y1 * y2 + 2 * y1**2),
        "a_33": (y1 / x3) ** 2,
    }
    engine = {
        "F2": F2,
        "Phi": Phi,
        "p2": p2,
        **{f"g_{i+1}{j+1}": g[i, j] for i in range(3) for j in range(i, 3)},
        **{f"ginv_{i+1}{j+1}": ginv[i, j] for i in range(3) for j in range(i, 3)},
        **{f"C_{i+1}{j+1}{k+1}": C[i][j][k] for i in range(3) for j in range(i, 3) for k in range(j, 3)},
        **{f"G_{i+1}": G[i] for i in range(3)},
    }
    points = [
        ((1, 0, 1), (1, 1, 1)),
        ((1, 7, 1), (1, 1, 1)),
        ((sp.Rational(3, 2), 7, sp.Rational(4, 5)), (sp.Rational(7, 10), sp.Rational(13, 10), sp.Rational(-2, 5))),
        ((sp.Rational(3, 5), -2, sp.Rational(17, 10)), (sp.Rational(19, 10), sp.Rational(2, 5), sp.Rational(11, 5))),
        ((sp.Rational(-6, 5), sp.Rational(3, 10), sp.Rational(-9, 10)), (sp.Rational(-4, 5), sp.Rational(1, 2), sp.Rational(11, 10))),
    ]
    rows = []
    for px, py in points:
        sub = dict(zip(xs + ys, list(px) + list(py)))
        vals = {k: sp.nsimplify(sp.simplify(v.subs(sub))) for k, v in engine.items()}
        for k in ("Gamma_1_13", "Gamma_2_23", "Gamma_3_33"):
            i, jk = k.split("_")[1:]
            vals[k] = sp.simplify(gamma(int(i) - 1, int(jk[0]) - 1, int(jk[1]) - 1).subs(sub))
        g_at = {k: vals[k] for k in vals if k.startswith("g_")}
        for k, expr in closed.items():
            v = sp.simplify(expr.subs(sub))
            if k in vals:
                assert sp.simplify(v - vals[k]) == 0, (k, px, py, v, vals[k])
            else:
                vals[k] = v
        th = vals["theta"]
        for ij in ("11", "12", "22", "33"):
            assert sp.simplify(th * vals[f"a_{ij}"] - g_at[f"g_{ij}"]) == 0, ("decomposition", ij)
        Fv = sp.sqrt(vals["F2"])
        for sign, tag in ((1, "+1"), (-1, "-1")):
            if Fv - sign * vals["Phi"] <= 0:
                continue
            for k, v in change_scalars(Fv, vals["Phi"], vals["p2"], sign).items():
                vals[f"{k}[{tag}]"] = v
        xs_s = ",".join(fmt(v) for v in px)
        ys_s = ",".join(fmt(v) for v in py)
        for k, v in vals.items():
            kind = "structural" if v == 0 and k.startswith("C_") else "closed_form"
            rows.append((k, xs_s, ys_s, fmt(v), TOL, kind))
    write("matsumoto_example", rows)


def euclid():
    x1, x2, y1, y2 = sp.symbols("x1 x2 y1 y2", real=True)
    xs, ys = [x1, x2], [y1, y2]
    F2 = y1**2 + y2**2
    g, ginv, C, G, gamma, Phi, p2 = objects(F2, xs, ys, [-x1, -x2])
    points = [((sp.Rational(4, 5), 0), (1, 0)), ((0, 0), (1, 0)), ((sp.Rational(3, 10), sp.Rational(-1, 2)), (sp.Rational(-3, 5), sp.Rational(7, 5)))]
    rows = []
    for px, py in points:
        sub = dict(zip(xs + ys, list(px) + list(py)))
        vals = {"F2": F2.subs(sub), "Phi": Phi.subs(sub), "p2": p2.subs(sub)}
        vals.update({f"g_{i+1}{j+1}": g[i, j].subs(sub) for i in range(2) for j in range(i, 2)})
        vals.update({f"G_{i+1}": G[i].subs(sub) for i in range(2)})
        Fv = sp.sqrt(vals["F2"])
        for sign, tag in ((1, "+1"), (-1, "-1")):
            for k, v in change_scalars(Fv, vals["Phi"], vals["p2"], sign).items():
                vals[f"{k}[{tag}]"] = v
        xs_s = ",".join(fmt(v) for v in px)
        ys_s = ",".join(fmt(v) for v in py)
        for k, v in vals.items():
            rows.append((k, xs_s, ys_s, fmt(v), TOL, "closed_form"))
    write("euclid_concurrent", rows)


if __name__ == "__main__":
    OUT.mkdir(exist_ok=True)
    euclid()
    example()
