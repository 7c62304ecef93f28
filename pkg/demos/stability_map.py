"""
Which gains are safe?
=====================

The PID iteration is affine, so its eigenvalues decide everything.  Spectral
radius below one means the model-based iteration converges; the weaker
condition max Re(lambda) < 1 is what the sample-based learner needs.  This
script prints both for a small grid on Chain Walk and shows a pair of gains
that sits in between.
"""
import numpy as np

from pidrl import Gains, chain_walk, exact_value_pe, pid_vi_run, run_learning, CountCap
from pidrl.analysis import scan_gains

mdp, policy = chain_walk(0.9)
print(" kp    kd    rho     max Re")
for g, rep in scan_gains(mdp, policy, [0.8, 1.0, 1.2, 1.6], [0.0], [0.0, 0.3], beta=0.0):
    flag = "" if rep.vi_convergent else ("  <- learner only" if rep.td_convergent else "  <- unstable")
    print(f"{g.kappa_p:4.1f}  {g.kappa_d:4.1f}  {rep.spectral_radius:6.4f}  {rep.max_real_part:6.4f}{flag}")

# kp = 1.6, kd = 0.3: the model-based iteration blows up...
g = Gains(1.6, 0.0, 0.3, 0.05, 0.0)
print("\nPID VI with (1.6, 0, 0.3) diverged:", pid_vi_run(mdp, g, policy=policy, k_max=500).diverged)

# ...while the sample-based learner, whose step sizes shrink, still improves
V = exact_value_pe(mdp, policy)
errs = np.mean([run_learning(mdp, policy, "pid-td", g, CountCap(0.5, 50), 30000, 10000,
                             np.random.default_rng(s), V).errors for s in range(5)], axis=0)
print("PID TD mean normalized error at 0/10k/20k/30k samples:", np.round(errs, 3))
