"""A tiny coverage study.  The shipped sim1.json/sim2.json grids take hours."""
from poolprev import simulate as sim
from poolprev.posterior import Design

grid = [sim.SimCondition(p, Design(m, 40 - m, 3), trials=20, seed=1)
        for m in (0, 20, 40) for p in (0.05, 0.3)]
records = sim.run_grid(grid)

print("condition   coverage  mean width  pct error")
for cond, row in zip(grid, sim.aggregate(records)):
    print(f"m={cond.design.m:<2} p={cond.p_true:<4}   {row.coverage:.2f}      "
          f"{row.width_mean:.4f}     {row.pct_error:.3f}")

# Every trial has its own random stream, so reruns reproduce the same table
again = sim.run_grid(grid)
print("identical rerun:", sim.trials_table(records) == sim.trials_table(again))
