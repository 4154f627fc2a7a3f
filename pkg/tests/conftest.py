import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from colltune.types import AlgorithmId, GammaTable, HockneyParams, ModelConfig, PlatformProfile  # noqa: E402

GRISOU_GAMMA = {2: 1.0, 3: 1.114, 4: 1.219, 5: 1.283, 6: 1.451, 7: 1.540}

# latencies and inverse bandwidths of a 10 GbE cluster, one pair per algorithm
PLANTED = {
    AlgorithmId.BcastLinear: HockneyParams(2.0e-5, 1.8e-9),
    AlgorithmId.BcastChain: HockneyParams(1.1e-5, 4.9e-10),
    AlgorithmId.BcastBinary: HockneyParams(1.3e-5, 4.7e-10),
    AlgorithmId.BcastSplitBinary: HockneyParams(0.9e-5, 3.6e-10),
    AlgorithmId.BcastKChain: HockneyParams(1.2e-5, 4.7e-10),
    AlgorithmId.BcastBinomial: HockneyParams(1.4e-5, 4.8e-10),
    AlgorithmId.GatherLinear: HockneyParams(1.5e-5, 1.5e-9),
    AlgorithmId.GatherLinearSync: HockneyParams(5.9e-5, 9.4e-10),
    AlgorithmId.GatherBinomial: HockneyParams(1.2e-4, 8.6e-10),
}


def planted_profile() -> PlatformProfile:
    return PlatformProfile(PLANTED, GammaTable(GRISOU_GAMMA), ModelConfig(), "planted")


@pytest.fixture
def gamma():
    return GammaTable(GRISOU_GAMMA)


@pytest.fixture
def planted():
    return planted_profile()


@pytest.fixture
def uniform():
    p = HockneyParams(1e-5, 1e-9)
    return PlatformProfile({a: p for a in AlgorithmId}, GammaTable(GRISOU_GAMMA), ModelConfig(), "uniform")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
