"""Chaos expansion of a Doleans exponential: energy per order against S^n / n!.

    python demos/chaos_energy.py
"""

from levy_malliavin import ExponentParams, JumpMeasure, LevyModel, TwoPointLaw, chaos_expand_Z

model = LevyModel(0.0, 1.0, JumpMeasure(2.0, TwoPointLaw(0.3, 0.5, -0.3, 0.5)), 1.0)
params = ExponentParams.special(h=0.8, gbar=1.0)
report = chaos_expand_Z(params, model, N=3, n_paths=20_000, steps=256, seed=3)
print(f"S = {report.S:.4f}")
for row in report.order_rows:
    print(f"order {row.order}: MC {row.energy_mc:.4f} +- {row.se:.4f}   exact {row.energy_analytic:.4f}")
t = report.truncation
print(f"truncation error after order 3: MC {t.energy_mc:.4f} +- {t.se:.4f}   exact {t.energy_analytic:.4f}")
print("(the truncation error is a mean of a very heavy-tailed quantity: typical samples undershoot it and the\n"
      " printed standard error understates the real spread, so expect large relative scatter between seeds)")
