"""
Letting the learner tune its own gains
======================================

Start PID TD from the plain TD gains (1, 0, 0) and let gain adaptation move
them by normalized semi-gradient steps on the squared sampled residual.  On
Cliff Walk with gamma = 0.999 and a small constant step size TD crawls; the
adapted learner raises its proportional gain and gets there much sooner.
"""
import numpy as np

from pidrl import CountCap, GainAdaptationConfig, cliff_walk, exact_value_pe, run_learning, run_pid_td_with_ga

mdp, policy = cliff_walk(0.999)
V = exact_value_pe(mdp, policy)
rate = CountCap(0.01)
cfg = GainAdaptationConfig(eta=1e-5, eps_norm=0.1)
steps, every, runs = 200_000, 40_000, 5

td = [run_learning(mdp, policy, "td", None, rate, steps, every, np.random.default_rng(s), V) for s in range(runs)]
ga = [run_pid_td_with_ga(mdp, policy, cfg, rate, steps, every, np.random.default_rng(s), V) for s in range(runs)]

print("samples    TD      PID TD + GA")
for k, step in enumerate(td[0].steps):
    print(f"{step:7d}  {np.mean([r.errors[k] for r in td]):.3f}   {np.mean([r.errors[k] for r in ga]):.3f}")
print("final gains (kp, ki, kd) averaged over runs:", np.round(np.mean([r.gains[-1] for r in ga], axis=0), 3))
