"""Thermal noise from first principles: Gibbs states, FDT, Langevin.

Temperature enters a lossless model only through the distribution of
its initial state.  Drawing x(0) from the Gibbs ensemble at
temperature T makes the output a stationary process whose covariance
is k_B T times the impulse response; adding damping instead yields the
Langevin picture with the matching white-noise intensity.  This script
prints all three faces of that one fact.
"""

import numpy as np

from lossless.statespace import lc_ladder
from lossless.thermal import (
    LangevinModel,
    ThermalEnsemble,
    empirical_fdt_check,
    internal_energy,
    sample_gibbs,
    sample_johnson_noise,
    simulate_langevin,
)


def main():
    # equipartition: n k_B T / 2 of mean internal energy
    ens = ThermalEnsemble(temperature=2.0, dimension=3, seed=11)
    energies = internal_energy(sample_gibbs(ens, 100_000))
    se = energies.std(ddof=1) / np.sqrt(len(energies))
    print("equipartition, n = 3, T = 2")
    print(f"  mean energy {energies.mean():.4f}  expected 3.0  SE {se:.4f}")

    # fluctuation-dissipation on the LC ladder
    grid = np.linspace(0.0, 4.0, 9)
    report = empirical_fdt_check(lc_ladder(), 1.0, 100_000, grid, seed=3)
    print("\noutput covariance vs k_B T g(lag) on the LC ladder")
    print("  lag    analytic   empirical")
    for i, lag in enumerate(grid):
        print(f"  {lag:4.1f}   {report.analytic[i, 0, 0, 0]:+.4f}    "
              f"{report.empirical[i, 0, 0, 0]:+.4f}")
    print(f"  worst deviation: {report.max_normalized_deviation:.2f} standard errors")

    # the dissipative twin: Ornstein-Uhlenbeck stationary variance k_B T
    model = LangevinModel(J=[[0.0]], K=[[1.0]], B=[[1.0]], temperature=1.0)
    tr = simulate_langevin(model, None, None, 0.02, 400.0, seed=3)
    print("\nLangevin relaxation, J = 0, K = 1, T = 1")
    print(f"  stationary variance {tr.values[2000:, 0].var():.3f}  expected 1.0")

    noise = sample_johnson_noise(1.0, 1.0, dt=0.01, steps=100_000, seed=5)
    print(f"  resistor noise variance {noise.values.var():.1f}  "
          f"expected {2.0 / 0.01:.1f}")


if __name__ == "__main__":
    main()
