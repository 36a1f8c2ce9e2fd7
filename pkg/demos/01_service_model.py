"""How one transmission attempt responds to energy, channel, and distance.

Run: python3 demos/01_service_model.py
"""

import numpy as np

from schedlab import success_probability


def main():
    print("success probability of a single attempt\n")

    energies = np.array([0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0])
    print("energy sweep (channel 1.5, distance 1.0):")
    for e in energies:
        p = success_probability(e, 1.5)
        bar = "#" * int(round(40 * p))
        print(f"  e={e:4.2f}  p={p:.4f}  {bar}")
    print("  zero energy is exactly zero; large energy saturates below 1\n")

    print("channel sweep (energy 1.0, distance 1.0):")
    for c in (0.5, 1.0, 2.0, 4.0):
        print(f"  c={c:3.1f}  p={success_probability(1.0, c):.4f}")
    print("  larger channel attenuation needs more energy for the same odds\n")

    print("distance sweep (energy 1.0, channel 1.0), cubic path loss:")
    for f in (0.8, 1.0, 1.25, 1.5, 2.0):
        print(f"  f={f:4.2f}  p={success_probability(1.0, 1.0, f):.4f}")

    print("\nmarginal value of energy is highest at small allocations:")
    for e in (0.1, 0.5, 1.0, 2.0):
        h = 1e-6
        slope = (success_probability(e + h, 1.5) -
                 success_probability(e - h, 1.5)) / (2 * h)
        print(f"  e={e:3.1f}  dp/de={slope:.4f}")
    print("\nthat concavity is why splitting a budget across jobs beats "
          "pouring it into one.")


if __name__ == "__main__":
    main()
