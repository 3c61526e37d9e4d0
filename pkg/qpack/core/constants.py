"""
Physical constants (CODATA 2018). All qpack modules take their constants from here.
"""

import math

C0 = 299_792_458.0  # m/s
MU0 = 1.256_637_062_12e-6  # N/A^2
EPS0 = 8.854_187_812_8e-12  # F/m
ETA0 = math.sqrt(MU0 / EPS0)  # ohm
K_B = 1.380_649e-23  # J/K
H_PLANCK = 6.626_070_15e-34  # J s

# Materials at or above this conductivity are metal for the lossless field solver.
CONDUCTOR_SIGMA_MIN = 1.0e5
