"""Drive the three update rules on the same 1-D problem and watch them differ.

The function is f(x) = 0.5 * x^2 starting from x = 2, so the gradient fed to
each optimizer at every step is simply its current x.

Run:  python demos/optimizer_steps.py
"""

import numpy as np

from bct.optim import Optimizer, OptimizerConfig, rectification_term
from bct.tensor import Tensor


def run(kind, steps=12, lr=0.5):
    p = Tensor([2.0], requires_grad=True, dtype=np.float64)
    opt = Optimizer({"x": p}, OptimizerConfig(kind=kind, learning_rate=lr))
    xs = []
    for _ in range(steps):
        p.grad = p.data.copy()  # df/dx = x
        opt.step()
        xs.append(float(p.data[0]))
    return xs


def main():
    print("x trajectory on f(x) = x^2/2 from x=2, lr=0.5, 12 steps")
    print()
    runs = {kind: run(kind) for kind in ("sgd", "adam", "rectadam")}
    print("  step   " + "".join(f"{k:>10s}" for k in runs))
    for i in range(12):
        print(f"  {i + 1:4d}   " + "".join(f"{runs[k][i]:10.4f}" for k in runs))
    print()
    print("sgd's momentum overshoots and rings; adam takes near-constant-size")
    print("steps until the bias corrections fade; rectadam spends its first")
    print("steps on momentum alone (-lr * m-hat), then switches the variance")
    print("term on and settles fastest here.")

    print()
    print("rectadam's warmup switch (beta2 = 0.999): the adaptive step is")
    print("rejected while rho_t <= 4 and re-enabled with multiplier r_t after")
    print()
    print("     t    rho_t       r_t")
    for t in (1, 4, 5, 10, 100, 1000):
        rho, r = rectification_term(t, 0.999)
        print(f"  {t:4d}  {rho:8.4f}  {('   --' if r is None else f'{r:8.4f}')}")
    print()
    print("r_t climbs toward 1, recovering plain adam once the second-moment")
    print("estimate has seen enough samples to be trusted.")


if __name__ == "__main__":
    main()
