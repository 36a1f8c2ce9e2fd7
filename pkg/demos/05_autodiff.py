"""The reverse-mode engine: gradcheck a recurrent net, then fit a curve.

Run: python3 demos/05_autodiff.py
"""

import numpy as np

from schedlab import Adam, Dense, LSTMCell, Tensor
from schedlab import autodiff as ad


def main():
    rng = np.random.default_rng(0)

    print("1) finite-difference check on an unrolled LSTM + dense head\n")
    cell = LSTMCell(rng, 3, 8, "cell")
    head = Dense(rng, 8, 1, "head")
    xs = rng.normal(size=(4, 1, 3))

    def loss_value():
        h, c = cell.init_state(1)
        total = None
        for t in range(4):
            h, c = cell.step(Tensor(xs[t]), h, c)
            term = ad.reduce_sum(head(h))
            total = term if total is None else ad.add(total, term)
        return total

    loss = loss_value()
    loss.backward()
    params = cell.parameters() + head.parameters()
    worst = 0.0
    for p in params:
        flat = p.data.ravel()
        for idx in range(0, flat.size, max(1, flat.size // 5)):
            keep = flat[idx]
            flat[idx] = keep + 1e-5
            up = float(loss_value().data)
            flat[idx] = keep - 1e-5
            down = float(loss_value().data)
            flat[idx] = keep
            fd = (up - down) / 2e-5
            a = float(p.grad.ravel()[idx])
            worst = max(worst, abs(a - fd) / max(abs(a), abs(fd), 1e-6))
    n = sum(p.data.size for p in params)
    print(f"   {n} parameters, spot-checked slice: worst rel err {worst:.2e}")

    print("\n2) Adam fitting y = sin(x) with a two-layer tanh net")
    lin1 = Dense(rng, 1, 16, "l1")
    lin2 = Dense(rng, 16, 1, "l2")
    params = lin1.parameters() + lin2.parameters()
    opt = Adam(params, lr=1e-2)
    x = np.linspace(-3.0, 3.0, 64)[:, None]
    y = np.sin(x)
    for step in range(400):
        pred = lin2(ad.tanh(lin1(Tensor(x))))
        err = ad.sub(pred, Tensor(y))
        loss = ad.reduce_mean(ad.mul(err, err))
        opt.zero_grad()
        loss.backward()
        opt.step()
        if step % 100 == 0 or step == 399:
            print(f"   step {step:>3}: mse {float(loss.data):.5f}")
    print("\nsame engine, optimizer, and cells that the learner trains on.")


if __name__ == "__main__":
    main()
