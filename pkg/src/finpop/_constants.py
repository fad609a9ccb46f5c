import math

import numpy as np

LN_2PI = math.log(2.0 * math.pi)

# Stirling-series remainder lgamma(n+1) - (n+1/2)log(n) + n - log(sqrt(2 pi)),
# tabulated for integer n <= 15 (index 0 is a placeholder, never read).
STIRLERR_TABLE = np.array([
    0.0,
    0.08106146679532726,
    0.0413406959554093,
    0.02767792568499834,
    0.020790672103765093,
    0.016644691189821193,
    0.013876128823070748,
    0.01189670994589177,
    0.010411265261972096,
    0.009255462182712733,
    0.00833056343336287,
    0.007573675487951841,
    0.00694284010720953,
    0.006408994188004207,
    0.0059513701127588475,
    0.005554733551962801,
])

SFE_S0 = 1.0 / 12.0
SFE_S1 = 1.0 / 360.0
SFE_S2 = 1.0 / 1260.0
SFE_S3 = 1.0 / 1680.0
SFE_S4 = 1.0 / 1188.0

# tail sums stop once the bounded remainder falls below this fraction
TAIL_STOP_REL = 1e-17

# log-scale half-width around alpha/2 inside which a float tail comparison is
# not trusted and the caller re-decides it in exact arithmetic
AMBIGUITY_BAND = 1e-8

# float tails whose log is below this are reported as 0 with an underflow flag
LOG_UNDERFLOW = -700.0

# Philox4x64-10 multipliers and key increments
PHILOX_M0 = np.uint64(0xD2E7470EE14C6C93)
PHILOX_M1 = np.uint64(0xCA5A826395121157)
PHILOX_W0 = np.uint64(0x9E3779B97F4A7C15)
PHILOX_W1 = np.uint64(0xBB67AE8584CAA73B)
PHILOX_ROUNDS = 10
