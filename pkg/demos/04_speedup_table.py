"""Cost of one iteration when only a fraction rho of prompts is regenerated."""

from optune_lab import CostModel
from optune_lab.efficiency import speedup_table

# measured share of wall time: generation, reward scoring, training
model = CostModel(0.718, 0.001, 0.281)

print(f"{'rho':>5} {'cost':>8} {'speedup':>8} {'gen saved':>10}")
for row in speedup_table(model, (0.1, 0.3, 0.5, 0.7, 1.0)):
    print(f"{row['rho']:>5} {row['cost']:>8.4f} {row['speedup']:>8.3f} {row['generation_savings']:>10.0%}")

# training never shrinks, so the ceiling is 1 / f_train
print(f"\nupper bound as rho -> 0: {1 / model.f_train:.2f}x")

# %% a generation-light pipeline gains much less
light = CostModel(0.3, 0.05, 0.65)
print("\nwith 30% generation:", [round(r["speedup"], 3) for r in speedup_table(light, (0.5, 0.7))])
