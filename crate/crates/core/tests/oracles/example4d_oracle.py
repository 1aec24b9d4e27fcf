"""Independent numpy reference values for the four-dimensional example.

Run from this directory: python3 example4d_oracle.py > ../goldens/example4d.json
"""
import json

import numpy as np


def curve(which, t):
    s = np.sin(t)
    if which == 1:
        return np.array([t - s, s / 2, 0.0]), np.array([1 - np.cos(t), np.cos(t) / 2, 0.0])
    return np.array([1.5 * np.pi - t + s, -s / 2, 0.0]), np.array([-1 + np.cos(t), -np.cos(t) / 2, 0.0])


def line(which, t):
    p, v = curve(which, t)
    d = v / np.linalg.norm(v) + np.array([0.0, 0.0, 1.0])
    return p, d / np.linalg.norm(d)


def skewness(n, lo, hi):
    ts = np.linspace(lo, hi, n)
    l1 = [line(1, t) for t in ts]
    l2 = [line(2, t) for t in ts]
    best = np.inf
    for p, u in l1:
        for q, w in l2:
            c = np.cross(u, w)
            best = min(best, abs(np.dot(q - p, c)) / np.linalg.norm(c))
    return best


def lift(which, t):
    p, d = line(which, t)
    span = np.column_stack([np.append(p, 1.0), np.append(d, 0.0)])
    q, _ = np.linalg.qr(span)
    return q


def largest_angle(a, b):
    s = np.linalg.svd(a.T @ b, compute_uv=False)
    return float(np.arccos(np.clip(s.min(), -1.0, 1.0)))


def separation(n, ext):
    ts = np.linspace(-ext, np.pi + ext, n)
    d1 = [lift(1, t) for t in ts]
    d2 = [lift(2, t) for t in ts]
    return min(largest_angle(a, b) for a in d1 for b in d2)


def family_a(t, lam):
    basis = np.column_stack([lift(1, t), lift(2, t)])
    return basis @ np.diag([lam, lam, 1 / lam, 1 / lam]) @ np.linalg.inv(basis)


goldens = {
    "skewness_101_base": skewness(101, 0.0, np.pi),
    "skewness_101_extended": skewness(101, -0.05, np.pi + 0.05),
    "separation_64": separation(64, 0.05),
    "family_a_t1_lambda2": family_a(1.0, 2.0).flatten().tolist(),
}
print(json.dumps(goldens, indent=2))
