"""
PID TD learning against TD learning on Chain Walk
=================================================

Both learners see exactly the same transitions (same seeds).  The integral
term with beta = 0.95 averages recent residuals, which damps sampling noise.
The aggregate curves go to ``td_comparison.svg``.
"""
import sys

from pidrl.harness import ExperimentConfig, emit_svg, run_experiment

out = sys.argv[1] if len(sys.argv) > 1 else "td_comparison.svg"
base = ExperimentConfig(env="chain-walk", gamma=0.9, algo="td", lr_v="0.5,50",
                        steps=20000, eval_every=1000, runs=20)
td = run_experiment(base).aggregate
pid = run_experiment(base.override(algo="pid-td", gains="0.8,0.3,0,0.05,0.95")).aggregate

for step, a, b in zip(td.steps[::5], td.mean[::5], pid.mean[::5]):
    print(f"{step:6d}  TD {a:.4f}   PID TD {b:.4f}")
emit_svg({"TD": td, "PID TD": pid}, out, title="Chain Walk, gamma 0.9")
print("wrote", out)
