"""
A small simulation study
========================

Bias and MSE of the mean-ratio and variance estimates, and coverage and
length of the four intervals, for a few preset scenarios. The same
numbers come out of ``zidrm simulate`` on the command line.
"""

from zidrm.simulation import get_scenario, run_study

REPS = 300  # raise for smoother numbers; results are reproducible per seed

for name in ("model1", "model5", "model9"):
    s = get_scenario(name, 100, 100)
    rep = run_study(s, REPS, ("I1", "I1B", "I4", "I4L"), seed=7, bootstrap_b=199)
    print(rep.table())
    print()

# worker processes change nothing but the wall clock
a = run_study(get_scenario("model3"), 100, ("I4L",), seed=3, workers=1)
b = run_study(get_scenario("model3"), 100, ("I4L",), seed=3, workers=2)
print("same report with 1 and 2 workers:", a.to_dict() == b.to_dict())
