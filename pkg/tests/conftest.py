import pytest

from selfsim.acceptance import AcceptanceContext


@pytest.fixture(scope="session")
def ctx():
    """Shared memoized artifacts (ground states, production PDE runs)."""
    return AcceptanceContext()


@pytest.fixture(scope="session")
def P2(ctx):
    return ctx.params(2, 1.5)


@pytest.fixture(scope="session")
def P3(ctx):
    return ctx.params(3, 1.7)


@pytest.fixture(scope="session")
def gs2(ctx):
    return ctx.ground_state(2, 1.5)


@pytest.fixture(scope="session")
def gs3(ctx):
    return ctx.ground_state(3, 1.7)
