"""Blend coefficient table: residuals and worst knot gap over an (H, eps) grid.

    python scripts/blend_table.py
"""

from fwis.spde import blend_coeffs, knot_continuity

print(f"{'H':>5} {'eps':>6} {'max residual':>14} {'max knot gap':>14}")
for H in (0.1, 0.3, 0.5, 0.7, 0.9):
    for eps in (0.01, 0.05, 0.1, 0.3, 0.5):
        c = blend_coeffs(H, eps)
        gap = max(k.rel_gap for k in knot_continuity(c))
        print(f"{H:5.2f} {eps:6.2f} {c.residuals().max():14.3e} {gap:14.3e}")
