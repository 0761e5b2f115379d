"""Walk through the reverse-mode tape on a few small expressions.

Run:  python demos/autodiff_basics.py
"""

import numpy as np

from bct.layers import Conv2d, Dense, sigmoid, softmax
from bct.tensor import Tensor, no_grad


def section(title):
    print()
    print(title)
    print("-" * len(title))


def main():
    section("A scalar chain: y = (3x + 1)^2")
    x = Tensor([2.0], requires_grad=True, dtype=np.float64)
    y = ((x * 3.0 + 1.0) ** 2).sum()
    y.backward()
    print(f"  y         = {y.item():g}")
    print(f"  dy/dx     = {x.grad[0]:g}       (hand value: 2*(3x+1)*3 = 42)")

    section("The gradient accumulates when a value is reused")
    a = Tensor([1.0, 2.0], requires_grad=True, dtype=np.float64)
    out = (a * a).sum() + a.sum()  # each element of a feeds two paths
    out.backward()
    print(f"  d/da [a^2 + a] = {a.grad}   (2a + 1)")

    section("Finite differences agree with the tape")
    w = Tensor(np.linspace(-1.0, 1.0, 6).reshape(2, 3), requires_grad=True,
               dtype=np.float64)

    def f():
        return (sigmoid(w) ** 2).sum()

    loss = f()
    loss.backward()
    h = 1e-6
    flat = w.data.reshape(-1)
    fd = np.zeros_like(flat)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        hi = f().item()
        flat[i] = keep - h
        lo = f().item()
        flat[i] = keep
        fd[i] = (hi - lo) / (2.0 * h)
    worst = np.max(np.abs(fd - w.grad.reshape(-1)))
    print(f"  max |fd - tape| over 6 entries = {worst:.2e}")

    section("Gradients flow through a conv -> dense -> softmax stack")
    rng = np.random.default_rng(0)
    img = Tensor(rng.uniform(-1, 1, (1, 1, 8, 8)), requires_grad=True,
                 dtype=np.float64)
    conv = Conv2d(1, 2, 3, dtype=np.float64,
                  weight=rng.uniform(-0.5, 0.5, (2, 1, 3, 3)))
    head = Dense(72, 2, dtype=np.float64, weight=rng.uniform(-0.5, 0.5, (2, 72)))
    scores = softmax(head(conv(img).reshape(1, 72)))
    picked = (scores * Tensor(np.array([[1.0, 0.0]]), dtype=np.float64)).sum()
    picked.backward()
    print(f"  scores            = {scores.data.round(4)}")
    print(f"  d(score0)/d(img)  has shape {img.grad.shape}, "
          f"mean |grad| {np.abs(img.grad).mean():.2e}")
    print(f"  conv weight grad  max |g| {np.abs(conv.weight.grad).max():.2e}")

    section("no_grad blocks recording")
    v = Tensor([5.0], requires_grad=True, dtype=np.float64)
    with no_grad():
        frozen = (v * 10.0).sum()
    print(f"  value computed: {frozen.item():g}; requires_grad={frozen.requires_grad}")


if __name__ == "__main__":
    main()
