import pytest

from fedgame import ClientObjective, QuadraticObjective

# the four heterogeneous scalar quadratics used throughout:
# x^2, (x-1)^2 + 1, 3(x-2)^2 + 2, (x-0.5)^2 + 3; their average is
# 1.5 x^2 - 3.75 x + 4.8125, minimized at x = 1.25
EXAMPLE_SPECS = ((0.0, 2.0, 0.0), (1.0, 2.0, 1.0), (2.0, 6.0, 2.0),
                 (0.5, 2.0, 3.0))


def build_example_clients(sigma: float = 0.0, radius: float = 5.0):
    return [ClientObjective(objective=QuadraticObjective([c], [[a]], off),
                            noise_sigma=sigma, domain_radius=radius)
            for c, a, off in EXAMPLE_SPECS]


@pytest.fixture
def example_clients():
    return build_example_clients()
