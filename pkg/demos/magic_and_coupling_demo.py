"""Magic detunings and the measurement strength versus axis angle.

For each in-plane quantization axis the probe is tuned to one of the two
magic frequencies; the table shows both branch detunings, |chi_J3| and the
optical depth per atom at 1.8 a.
"""

import numpy as np

from nanofiber_qsim import FiberSpec, load_system, solve_he11
from nanofiber_qsim.squeezing_dynamics import evaluate_axis

d1 = load_system("D1")
sol = solve_he11(FiberSpec(radius_a=225.0, n1=1.4469, n2=1.0), d1.wavelength_nm)
r = 1.8 * sol.a

print(" phi   delta3/MHz  delta4/MHz   |chi_J3|      OD/N_A   gamma_up/gamma_s")
for phi in range(0, 180, 15):
    res = evaluate_axis(d1, sol, r, np.radians(phi))
    c = res.coupling
    print(f"{phi:4d}  {res.magic.delta_mhz(3):10.2f}  {res.magic.delta_mhz(4):10.2f}  "
          f"{abs(c.chi_J3):.3e}  {c.od_per_atom:.4f}  {res.rates.scaled().gamma_up:8.3f}")
