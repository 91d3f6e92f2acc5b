"""Independent reference computations shared by the module and acceptance tests."""
import numpy as np

from heco.newtonian import IntegratorConfig, integrate_trajectory
from heco.potential import InteractionModel, Variant, jump_length, morse_turning_points


def trapped_period_check(b, E_i=10.0, t_max=8.0, dt=2e-4,
                         model=InteractionModel(Variant.FULL)):
    """Follow a trapped trajectory away from the adsorbate.

    Returns (x-advances between successive upper turning points, predicted
    jump length, observed (z_min, z_max) far from the adsorbate, Morse
    turning points at the final E_z).
    """
    cfg = IntegratorConfig(follow_trapped=True, t_max=t_max, dt=dt, record_every=1)
    r = integrate_trajectory(b, 0.0, E_i, model, cfg)
    assert r.trapped
    far = np.abs(r.x) > cfg.x_cut + 2.0
    j = np.flatnonzero(far[1:-1] & (r.pz[1:-1] > 0) & (r.pz[2:] <= 0)) + 1
    advances = np.diff(r.x[j])
    predicted = jump_length(model.morse, E_i, r.E_z)
    return (advances, predicted, (float(r.z[far].min()), float(r.z[far].max())),
            morse_turning_points(model.morse, r.E_z))
