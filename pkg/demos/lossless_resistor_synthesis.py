"""Approximating dissipative elements with banks of lossless oscillators.

Two constructions, same idea: a resistor never gives energy back, but a
large reservoir of undamped oscillators absorbs it for a long time
before any of it returns.

Part one approximates the memoryless element y = k u with an N-block
bank and prints the measured worst error against the guaranteed bound
as N doubles.  Part two synthesizes a lossless realization of the
convolution kernel g(t) = exp(-t) to a target L2 error and compares
its pulse response with the exact convolution.
"""

import numpy as np

from lossless.approx_linear import (
    dissipative_lossless_approx,
    memoryless_error_bound,
    memoryless_lossless_approx,
)
from lossless.statespace import SignatureMatrix, Trajectory, check_time_reversible


def memoryless_sweep():
    dt = 1e-4
    t = np.arange(int(round(1.0 / dt)) + 1) * dt
    u = Trajectory(dt=dt, values=np.sin(np.pi * t) ** 2)
    print("memoryless element, unit gain, u = sin^2(pi t) on [0, 1]")
    print("  N     max error    guaranteed")
    for n in (4, 16, 64, 256):
        bank = memoryless_lossless_approx(1.0, 1.0, n)
        y = bank.zero_state_response(u.values[:, None], dt)[:, 0]
        worst = np.abs(u.values - y).max()
        bound = memoryless_error_bound(1.0, 1.0, n, u).values.max()
        print(f"  {n:3d}   {worst:.6f}     {bound:.6f}")


def kernel_synthesis():
    dt = 1e-3
    t = np.arange(0, 10 + 1e-12, dt)
    g = Trajectory(dt=dt, values=np.exp(-t))
    f = dissipative_lossless_approx(g, 0.1, 5.0, tail=lambda s: np.exp(-s))
    print("\nkernel g(t) = exp(-t), target L2 error 0.1 on [0, 5]")
    print(f"  harmonics          {f.n_harmonics}")
    print(f"  window             {f.horizon:.3f}")
    print(f"  shift              {f.shift:.3e}")
    print(f"  measured L2 error  {f.l2_error_measured:.4f}")

    # drive both the synthesized bank and the exact convolution
    ts = np.arange(5001) * dt
    u = np.sin(np.pi * ts / 5.0) ** 2
    y_bank = f.zero_state_response(u[:, None], dt)[:, 0]
    y_true = np.convolve(u, np.exp(-ts))[: len(ts)] * dt
    print(f"  pulse response deviation, max over [0, 5]: "
          f"{np.abs(y_bank - y_true).max():.4f}")

    pulse = Trajectory(dt=dt, values=np.sin(np.pi * ts[:2001] / 2.0) ** 2)
    v = check_time_reversible(f, SignatureMatrix.identity(1), pulse)
    print(f"  time reversible    {v.reversible} (deviation {v.max_deviation:.2e})")


def main():
    memoryless_sweep()
    kernel_synthesis()


if __name__ == "__main__":
    main()
