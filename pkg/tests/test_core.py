import json

import numpy as np
import pytest

from convoy import presets
from convoy.core import (Obstacle, RobotState, ScenarioConfig,
                         TargetMotionSpec, as_vec, inf_norm, validate_scenario)


class TestInfNorm:
    def test_zero_vector(self):
        assert inf_norm([0.0, 0.0, 0.0]) == 0.0

    def test_experiment_target_velocity(self):
        assert inf_norm([0.06, 0.0]) == pytest.approx(0.06)

    def test_sign_symmetry(self):
        assert inf_norm([-3.0, 2.0, 1.0]) == 3.0

    def test_norm_axioms_sampled(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            n = rng.integers(2, 4)
            v = rng.normal(size=n)
            w = rng.normal(size=n)
            a = rng.normal()
            assert inf_norm(v) >= 0.0
            assert inf_norm(a * v) == pytest.approx(abs(a) * inf_norm(v))
            assert inf_norm(v + w) <= inf_norm(v) + inf_norm(w) + 1e-12


class TestTypes:
    def test_as_vec_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            as_vec([1.0, np.nan])

    def test_as_vec_dimension_check(self):
        with pytest.raises(ValueError):
            as_vec([1.0, 2.0], n=3)

    def test_robot_id_positive(self):
        with pytest.raises(ValueError):
            RobotState(id=0, position=[0.0, 0.0])

    def test_robot_copy_is_independent(self):
        s = RobotState(id=1, position=[1.0, 2.0])
        dup = s.copy()
        dup.position[0] = 9.0
        assert s.position[0] == 1.0

    def test_obstacle_radius_positive(self):
        with pytest.raises(ValueError):
            Obstacle(center=[0.0, 0.0], radius=0.0)

    def test_motion_speed_bounds(self):
        assert TargetMotionSpec.constant([1.0, 0.0, 0.0]).speed_bound() == 1.0
        assert TargetMotionSpec.circular([0.0, 0.0, 0.0], 0.1).speed_bound() == pytest.approx(0.2)

    def test_motion_unknown_kind(self):
        with pytest.raises(ValueError):
            TargetMotionSpec(kind="spiral")


class TestScenarioJson:
    def test_round_trip_all_presets(self):
        for name in presets.PRESET_NAMES:
            cfg = presets.build(name)
            again = ScenarioConfig.from_json(cfg.to_json())
            assert again.to_dict() == cfg.to_dict()

    def test_unknown_top_level_key_rejected(self):
        data = presets.build("3d_line").to_dict()
        data["turbo"] = True
        with pytest.raises(ValueError, match="unknown scenario keys"):
            ScenarioConfig.from_dict(data)

    def test_unknown_nested_key_rejected(self):
        data = presets.build("3d_line").to_dict()
        data["robots"][0]["color"] = "red"
        with pytest.raises(ValueError, match="unknown robot keys"):
            ScenarioConfig.from_dict(data)

    def test_missing_key_rejected(self):
        data = presets.build("3d_line").to_dict()
        del data["zeta"]
        with pytest.raises(ValueError, match="missing scenario keys"):
            ScenarioConfig.from_dict(data)

    def test_packaged_files_match_builders(self):
        for name in presets.PRESET_NAMES:
            stored = json.loads(presets.preset_path(name).read_text())
            assert stored == presets.build(name).to_dict()


def _minimal(r=1.5, R=4.0, eta2=2.5, robots=None, **overrides):
    robots = robots or [
        RobotState(id=1, position=[0.0, 3.0]),
        RobotState(id=2, position=[0.0, -3.0]),
    ]
    kwargs = dict(
        n=2, robots=robots, target_start=[1.0, 0.0],
        target_motion=TargetMotionSpec.constant([0.06, 0.0]),
        r=r, R=R, zeta=0.2, eta1=2.0, eta2=eta2, dt=0.01, duration=1.0,
    )
    kwargs.update(overrides)
    return ScenarioConfig(**kwargs)


class TestValidateScenario:
    def test_experiment_radii_pass(self):
        report = validate_scenario(_minimal(r=1.5, R=4.0, eta2=2.5))
        assert report.passed, report.summary()

    def test_sensing_margin_violation(self):
        report = validate_scenario(_minimal(r=1.5, R=3.0, eta2=2.5))
        failed = {c.name for c in report.failures()}
        assert failed == {"sensing_margin"}

    def test_overlapping_start_positions(self):
        robots = [RobotState(id=1, position=[0.0, 1.0]),
                  RobotState(id=2, position=[0.0, 1.0])]
        report = validate_scenario(_minimal(robots=robots))
        assert any(c.name == "initial_separation" for c in report.failures())

    def test_target_speed_limit(self):
        cfg = _minimal(target_motion=TargetMotionSpec.constant([0.25, 0.0]))
        assert any(c.name == "target_speed_limit" for c in
                   validate_scenario(cfg).failures())

    def test_duplicate_ids(self):
        robots = [RobotState(id=1, position=[0.0, 3.0]),
                  RobotState(id=1, position=[0.0, -3.0])]
        report = validate_scenario(_minimal(robots=robots))
        assert any(c.name == "unique_ids" for c in report.failures())

    def test_robot_inside_obstacle(self):
        cfg = _minimal(obstacles=[Obstacle(center=[0.0, 3.2], radius=0.5)])
        assert any(c.name == "initial_obstacle_clearance" for c in
                   validate_scenario(cfg).failures())

    def test_all_presets_validate(self):
        for name in presets.PRESET_NAMES:
            assert validate_scenario(presets.build(name)).passed, name
