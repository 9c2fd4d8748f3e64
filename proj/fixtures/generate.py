"""Writes the JSON problem fixtures. Run from this directory: python3 generate.py"""

import json
import math

PI = math.pi


def write(name, doc):
    with open(f"{name}.json", "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def plane(name, description, eps, lagrangian=None):
    doc = {
        "name": name,
        "description": description,
        "flags": {"time_independent": True, "orientable": True, "compact": False},
        "charts": [{"name": "R2", "coords": ["x", "y"], "domain": {"x": [None, None], "y": [None, None]}}],
        "source_form": {"R2": eps},
    }
    if lagrangian:
        doc["lagrangian"] = {"R2": lagrangian}
    return doc


write("free_particle", plane("free_particle", "Free particle in the plane.", ["xdd", "ydd"],
                             "-(xd^2 + yd^2)/2"))
write("harmonic", plane("harmonic", "Isotropic harmonic oscillator in the plane.", ["xdd + x", "ydd + y"],
                        "-(xd^2 + yd^2)/2 + (x^2 + y^2)/2"))
write("nonvariational", plane("nonvariational", "Velocity coupling without a Lagrangian.", ["yd", "0"]))
write("not_affine", plane("not_affine", "Quadratic in the acceleration.", ["xdd^2", "ydd"]))

# Moebius band of radius r and half-width a; charts V (phi in (-pi, pi)) and
# Vbar (phibar in (0, 2 pi)). The second sheet of the overlap reverses tau.
MOB_G = "((r + {t}*cos({p}/2))^2 + {t}^2/4)"
MOB_Q = "(4*cos({p}/2)*(r + {t}*cos({p}/2)) + {t})"


def mobius_eps(p, t):
    G = MOB_G.format(p=p, t=t)
    Q = MOB_Q.format(p=p, t=t)
    A_p = f"{p}d^2*{t}*sin({p}/2)*(r + {t}*cos({p}/2))/2 - {p}d*{t}d*{Q}/2"
    A_t = f"{p}d^2*{Q}/4"
    return {p: f"{A_p} - {G}*{p}dd", t: f"{A_t} - {t}dd"}


def mobius_kinetic(p, t):
    return f"({t}d^2 + {MOB_G.format(p=p, t=t)}*{p}d^2)/2"


write("mobius", {
    "name": "mobius",
    "description": "Kinetic energy on the open Moebius band of radius r.",
    "constants": {"r": 2, "a": 1},
    "flags": {"time_independent": True, "orientable": False, "compact": False},
    "charts": [
        {"name": "V", "coords": ["phi", "tau"], "domain": {"x": ["-pi", "pi"], "y": ["-a", "a"]}},
        {"name": "Vbar", "coords": ["phib", "taub"], "domain": {"x": [0, "2*pi"], "y": ["-a", "a"]}},
    ],
    "transitions": [
        {"from": "Vbar", "to": "V", "pieces": [
            {"guard": "pi - phib", "map": ["phib", "taub"]},
            {"guard": "phib - pi", "map": ["phib - 2*pi", "-taub"]}]},
        {"from": "V", "to": "Vbar", "pieces": [
            {"guard": "phi", "map": ["phi", "tau"]},
            {"guard": "-phi", "map": ["phi + 2*pi", "-tau"]}]},
    ],
    "source_form": {"V": mobius_eps("phi", "tau"), "Vbar": mobius_eps("phib", "taub")},
    "lagrangian": {"V": mobius_kinetic("phi", "tau"), "Vbar": mobius_kinetic("phib", "taub")},
})

# Torus with four angle charts: each angle either in (-pi, pi) ("p") or (0, 2 pi) ("0").
TORUS_TYPES = ["pp", "00", "p0", "0p"]


def torus_domain(kind):
    iv = {"p": ["-pi", "pi"], "0": [0, "2*pi"]}
    return {"x": iv[kind[0]], "y": iv[kind[1]]}


def angle_pieces(v, src, dst):
    if src == dst:
        return [([], v)]
    if src == "p":
        return [([v], v), ([f"-{v}"], f"{v} + 2*pi")]
    return [([f"pi - {v}"], v), ([f"{v} - pi"], f"{v} - 2*pi")]


def torus_atlas():
    charts = [{"name": f"U_{k}", "coords": ["phi", "theta"], "domain": torus_domain(k)} for k in TORUS_TYPES]
    transitions = []
    for a in TORUS_TYPES:
        for b in TORUS_TYPES:
            if a == b:
                continue
            pieces = []
            for gx, mx in angle_pieces("phi", a[0], b[0]):
                for gy, my in angle_pieces("theta", a[1], b[1]):
                    piece = {"map": [mx, my]}
                    if gx + gy:
                        piece["guard"] = gx + gy
                    pieces.append(piece)
            transitions.append({"from": f"U_{a}", "to": f"U_{b}", "pieces": pieces})
    return charts, transitions


def gyroscopic(a, b, c):
    S = f"(({a})*sin(theta) - ({b})*sin(phi)*cos(theta) + ({c})*cos(phi)*cos(theta))"
    ex = f"(R + r*cos(theta))^2*phidd - r*(R + r*cos(theta))*(2*phid*sin(theta) + {S})*thetad"
    ey = f"r^2*thetadd + r*(R + r*cos(theta))*(phid*sin(theta) + {S})*phid"
    return {"phi": ex, "theta": ey}


HALF = PI / 4 + 0.25  # half-width of the grid cells; neighbours overlap by 0.5
CENTRES = [0.0, PI / 2, PI, 3 * PI / 2]


def grid_cell(i, k):
    """Cell centred at (CENTRES[i], CENTRES[k]) in a chart where it fits."""
    kinds, box = "", {}
    for axis, idx in (("x", i), ("y", k)):
        c = CENTRES[idx]
        if idx == 2:
            kinds += "0"
        else:
            kinds += "p"
            c = c if c <= PI else c - 2 * PI
        box[axis] = [round(c - HALF, 12), round(c + HALF, 12)]
    return {"chart": f"U_{kinds}", "box": box}


def snake(skip_origin):
    order = []
    for k in range(4):
        row = range(4) if k % 2 == 0 else range(3, -1, -1)
        for i in row:
            if skip_origin and i == 0 and k == 0:
                continue
            order.append(grid_cell(i, k))
    return order


def ring(outer, inner, order):
    """Four strips covering inner < max(|phi|, |theta|) < outer in U_pp."""
    strips = {
        "bottom": {"x": [-outer, outer], "y": [-outer, -inner]},
        "top": {"x": [-outer, outer], "y": [inner, outer]},
        "left": {"x": [-outer, -inner], "y": [-outer, outer]},
        "right": {"x": [inner, outer], "y": [-outer, outer]},
    }
    return [{"chart": "U_pp", "box": {a: [round(v, 12) for v in strips[s][a]] for a in "xy"}} for s in order]


def torus_problem(name, description, eps, cover=None, compact=False):
    charts, transitions = torus_atlas()
    doc = {
        "name": name,
        "description": description,
        "constants": {"R": 2, "r": 1},
        "flags": {"time_independent": True, "orientable": True, "compact": compact},
        "charts": charts,
        "transitions": transitions,
        "source_form": {c["name"]: eps for c in charts},
    }
    if cover:
        doc["cover"] = cover
    return doc


punctured_cover = {
    "cells": snake(skip_origin=True)
    + ring(HALF, 0.5, ["bottom", "right", "top", "left"])
    + ring(0.6, 0.15, ["left", "bottom", "right", "top"]),
    "end": {"chart": "U_pp", "box": {"x": [-0.25, 0.25], "y": [-0.25, 0.25]}},
}

write("torus_constant", torus_problem(
    "torus_constant", "Gyroscopic system on the punctured torus, a = b = c = 1.",
    gyroscopic("1", "1", "1"), punctured_cover))
write("torus_trig", torus_problem(
    "torus_trig", "Gyroscopic system on the torus with vanishing position 2-form.",
    gyroscopic("cos(theta)*sin(phi)", "sin(theta) + cos(phi)", "sin(phi)")))
write("torus_magnetic", torus_problem(
    "torus_magnetic", "Constant magnetic field on the full torus; the position 2-form has total mass 4 pi^2.",
    {"phi": "phidd + thetad", "theta": "thetadd - phid"}, {"cells": snake(skip_origin=False)}, compact=True))
