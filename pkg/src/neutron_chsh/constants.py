"""Physical constants (CODATA, via scipy) used throughout the package."""

import math

from scipy import constants as _c

HBAR = _c.hbar
#: h / m_n in m^2/s (de Broglie: v = H_OVER_MN / wavelength)
H_OVER_MN = _c.h / _c.m_n
#: magnitude of the neutron magnetic moment in J/T
MU_N = abs(_c.physical_constants["neutron mag. mom."][0])

SQRT2 = math.sqrt(2.0)
TSIRELSON = 2.0 * SQRT2
#: minimum fringe contrast that allows any CHSH violation
CONTRAST_CRIT = SQRT2 / 2.0
#: detector efficiency needed to close the detection loophole
ETA_CRIT = 2.0 * (SQRT2 - 1.0)
LOCAL_BOUND = 2.0
