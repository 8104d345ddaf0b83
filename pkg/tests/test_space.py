import numpy as np
import pytest

from cmfbo.space import Observation, SearchSpace, observations_to_arrays, unit_space


def test_round_trip_identity():
    space = SearchSpace(
        dims=(("lr", 1e-5, 1e-2), ("batch", 32.0, 1024.0), ("clip", 0.02, 0.2)),
        fidelity_range=(0.0, 1.0),
    )
    rng = np.random.default_rng(0)
    for _ in range(50):
        x = space.denormalize(rng.random(3))
        back = space.denormalize(space.normalize(x))
        assert np.all(np.abs(back - x) < 1e-12)


def test_fidelity_round_trip():
    space = SearchSpace(dims=(("a", 0.0, 1.0),), fidelity_range=(30.0, 600.0))
    for u in (0.0, 0.25, 0.5, 1.0):
        z = space.denormalize_fidelity(u)
        assert abs(space.normalize_fidelity(z) - u) < 1e-12
    assert space.denormalize_fidelity(0.0) == 30.0
    assert space.denormalize_fidelity(1.0) == 600.0


def test_invalid_bounds_rejected():
    with pytest.raises(ValueError):
        SearchSpace(dims=(("a", 1.0, 1.0),))
    with pytest.raises(ValueError):
        SearchSpace(dims=(("a", 0.0, 1.0),), fidelity_range=(1.0, 0.5))
    with pytest.raises(ValueError):
        SearchSpace(dims=())


def test_morphology_style_bounds_fixture():
    # 12-d bounds of the kind used for link length/radius scaling: 6 lengths
    # in [0.3, 2] and 6 radii in [0.5, 1.5].
    dims = tuple((f"len{i}", 0.3, 2.0) for i in range(6)) + tuple(
        (f"rad{i}", 0.5, 1.5) for i in range(6)
    )
    space = SearchSpace(dims=dims)
    assert space.ndim == 12
    mid = space.denormalize(np.full(12, 0.5))
    assert np.allclose(mid[:6], 1.15)
    assert np.allclose(mid[6:], 1.0)


def test_space_dict_round_trip():
    space = SearchSpace(dims=(("a", -1.0, 2.0),), fidelity_range=(0.25, 1.0))
    assert SearchSpace.from_dict(space.to_dict()) == space


def test_observation_validation():
    obs = Observation(x=(0.5, 0.25), z=1.0, y=-0.3, cost=10.0)
    assert obs.point.tolist() == [0.5, 0.25, 1.0]
    with pytest.raises(ValueError):
        Observation(x=(1.5,), z=0.0, y=0.0, cost=1.0)
    with pytest.raises(ValueError):
        Observation(x=(0.5,), z=-0.2, y=0.0, cost=1.0)
    with pytest.raises(ValueError):
        Observation(x=(0.5,), z=0.0, y=0.0, cost=-1.0)


def test_observations_to_arrays():
    obs = [
        Observation(x=(0.1,), z=0.0, y=1.0, cost=1.0),
        Observation(x=(0.9,), z=1.0, y=2.0, cost=2.0),
    ]
    X, y = observations_to_arrays(obs)
    assert X.shape == (2, 2)
    assert y.tolist() == [1.0, 2.0]
    with pytest.raises(ValueError):
        observations_to_arrays([])


def test_unit_space():
    space = unit_space(3)
    assert space.ndim == 3
    assert np.allclose(space.normalize([0.2, 0.4, 0.6]), [0.2, 0.4, 0.6])
