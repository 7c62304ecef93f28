"""
Accelerating value iteration with a PID controller
===================================================

Plain value iteration contracts at rate gamma.  Feeding the Bellman residual
through proportional and derivative terms changes the linear map behind the
iteration; when its spectral radius drops below gamma, the error falls
faster.
"""
import numpy as np

from pidrl import Gains, exact_value_pe, pid_vi_run, spectral_report
from pidrl.mdp import TabularMdp

# a lazy random walk on a 10-state path: half the time it stays put,
# otherwise it steps left or right; entering the left end pays 1
n, gamma = 10, 0.9
P = np.zeros((n, 1, n))
for x in range(n):
    P[x, 0, x] += 0.5
    P[x, 0, max(x - 1, 0)] += 0.25
    P[x, 0, min(x + 1, n - 1)] += 0.25
R = np.zeros((n, 1, n))
R[:, 0, 0] = 1.0
mdp = TabularMdp(P, R, gamma)
policy = np.ones((n, 1))
V = exact_value_pe(mdp, policy)

vi = Gains(1.0, 0.0, 0.0, 0.05, 0.0)
pid = Gains(1.4, 0.0, 0.4, 0.05, 0.0)
for label, g in (("value iteration", vi), ("PID (1.4, 0, 0.4)", pid)):
    rho = spectral_report(mdp, policy, g).spectral_radius
    run = pid_vi_run(mdp, g, policy=policy, k_max=200, tol=0.0, exact=V)
    print(f"{label:20s} rho = {rho:.4f}   error after 20/60/200 iterations: "
          + " ".join(f"{run.errors[min(k, run.iterations)]:.2e}" for k in (20, 60, 200)))

# (a run that hits the fixed point exactly stops early)

# the same idea works for control: PID on the Bellman optimality operator
from pidrl import chain_walk, exact_value_control
cmdp, _ = chain_walk(0.99)
Q = exact_value_control(cmdp)
for label, g in (("value iteration", vi), ("PID (1.0, 0.1, 0.2)", Gains(1.0, 0.1, 0.2))):
    run = pid_vi_run(cmdp, g, k_max=3000, tol=1e-8, exact=Q)
    print(f"control, {label:20s} iterations to 1e-8 residual: {run.iterations}")
