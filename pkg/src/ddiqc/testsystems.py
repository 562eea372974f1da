"""Reference plants for examples, tests and benchmarks."""
import numpy as np

from .lti import StateSpaceModel, partial_fraction_model

SEVEN_POLE_POLES = (-0.51, -0.19, -0.21, -0.55, -0.2, -0.52, -0.5)


def seven_pole_plant():
    """Stable 2x2 plant with seven real poles clustered near -0.5 and -0.2.

    ``G(z) = [[2/(z+.51), 1/(z+.19) + 1/(z+.21)],
              [1/(z+.55) + 2/(z+.2), 2/(z+.52) + 3/(z+.5)]]``
    """
    def e(i, j, v):
        R = np.zeros((2, 2))
        R[i, j] = v
        return R

    residues = [e(0, 0, 2), e(0, 1, 1), e(0, 1, 1), e(1, 0, 1), e(1, 0, 2), e(1, 1, 2), e(1, 1, 3)]
    return partial_fraction_model(SEVEN_POLE_POLES, residues)


def first_order_lowpass(a=0.5):
    """SISO ``y+ = a y + (1 - a) u`` with unit DC gain."""
    return StateSpaceModel([[a]], [[1.0 - a]], [[1.0]], [[0.0]])
