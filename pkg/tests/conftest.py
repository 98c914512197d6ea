import numpy as np
import pytest
import torch

from predictive_exposure.model import Checkpoint, ExposureNet, NetworkConfig

TINY_NET = NetworkConfig(resolution=16, conv_widths=(2, 2, 2, 2), fc_widths=(4, 4))


@pytest.fixture(scope="session")
def tiny_checkpoint():
    torch.manual_seed(0)
    net = ExposureNet(TINY_NET)
    net.eval()
    return Checkpoint(TINY_NET, {k: v.detach().clone() for k, v in net.state_dict().items()})


# ---------------------------------------------------------------- acceptance summary

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_acceptance(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if passed else 'FAIL'}  {detail}")
