import numpy as np
import pytest

from lingp_mpc.bo import collect_dataset
from lingp_mpc.config import default_config
from lingp_mpc.gp import LinGPModel, fit, kernel_from_config


@pytest.fixture(scope="session")
def cfg():
    return default_config()


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def report(request):
    """Record one acceptance line; ``report(name, ok, detail)`` then asserts ``ok``."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def _report(name, ok, detail=""):
        lines.append(f"{'PASS' if ok else 'FAIL'} criterion {name}: {detail}")
        return ok

    return _report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def quad(cfg):
    return cfg.quadrotor


@pytest.fixture(scope="session")
def force_data(cfg):
    """Default scripted collection."""
    return collect_dataset(cfg)


@pytest.fixture(scope="session")
def trained_gp(cfg, force_data):
    return fit(force_data.X, force_data.y, kernel_from_config(cfg.gp), cfg.gp.noise_std**2)


class AffineForce:
    """Exactly affine force model ``fz = g . d + c`` with GP-like methods."""

    def __init__(self, gradient, offset):
        self.gradient = np.asarray(gradient, dtype=float)
        self.offset = float(offset)

    def predict_mean(self, d):
        d = np.asarray(d, dtype=float)
        v = d @ self.gradient + self.offset
        return float(v) if d.ndim == 1 else v

    def linearize(self, d0):
        return LinGPModel(np.asarray(d0, dtype=float), self.offset, self.gradient)


@pytest.fixture
def affine_force():
    return AffineForce


def hover_pair(cfg, lower_controller, separation=0.3, z0=0.5, duration=3.0, upper="linmpc"):
    """Upper drone hovering ``separation`` above the lower one (constant wake)."""
    from lingp_mpc.dynamics import hover_state
    from lingp_mpc.simulator import Scenario

    N, dt = cfg.mpc.horizon, cfg.mpc.dt
    steps = int(round(duration / dt))
    pu, pl = (0.0, 0.0, z0 + separation), (0.0, 0.0, z0)
    refs = np.stack([np.tile(hover_state(pu), (steps + N + 1, 1)),
                     np.tile(hover_state(pl), (steps + N + 1, 1))])
    return Scenario(x0=np.stack([hover_state(pu), hover_state(pl)]), refs=refs,
                    controllers=(upper, lower_controller), dd=separation, duration=duration,
                    dt=dt, horizon=N, lower=1)


def truth_tangent(cfg, d0):
    """Exact affine (tangent) model of the truth field at ``d0``."""
    from lingp_mpc.downwash import true_force_z

    d0 = np.asarray(d0, dtype=float)
    h = 1e-6
    grad = np.array([(true_force_z(d0 + h * e, cfg.downwash) - true_force_z(d0 - h * e, cfg.downwash))
                     / (2 * h) for e in np.eye(3)])
    f0 = float(true_force_z(d0, cfg.downwash))
    return AffineForce(grad, f0 - grad @ d0)
