import numpy as np

from hrcal import io as hio
from hrcal import signal as sig
from hrcal.activity import classify_pal, compute_counts, get_scheme
from hrcal.synth import (CohortConfig, DeviceErrorModel, generate_cohort,
                         generate_participant, inject_known_miscalibration)

SHORT = dict(rs_minutes=6.0, ls_minutes_range=(6.0, 8.0), is_minutes=12.0)


def quiet_device():
    return DeviceErrorModel(name="wrist", bias_bpm=(), noise_sd_bpm=0.0,
                            ma_gain_bpm_per_kcpm=0.0, lag_s=10.0, cadence_s=5.0)


class TestDeterminism:
    def test_identical_config_identical_bytes(self, tmp_path):
        cfg = CohortConfig(n_participants=2, seed=11, **SHORT)
        for run in ("a", "b"):
            for session, truth in generate_cohort(cfg):
                hio.write_session(session, tmp_path / run / session.profile.id,
                                  truth_hr=truth.truth_hr)
        files_a = sorted((tmp_path / "a").rglob("*.csv"))
        files_b = sorted((tmp_path / "b").rglob("*.csv"))
        assert [f.name for f in files_a] == [f.name for f in files_b]
        for fa, fb in zip(files_a, files_b):
            assert fa.read_bytes() == fb.read_bytes(), fa.name

    def test_seed_42_two_sessions_validate(self):
        cfg = CohortConfig(n_participants=2, seed=42, **SHORT)
        pairs = generate_cohort(cfg)
        assert len(pairs) == 2
        for session, _ in pairs:
            session.validate()
            assert len(session.schedule) == 3


class TestDeviceErrorModel:
    def test_noise_free_device_equals_lagged_truth(self):
        cfg = CohortConfig(n_participants=1, seed=3, devices=(quiet_device(),),
                           **SHORT)
        session, truth = generate_participant(cfg, 0)
        lagged = np.interp(session.device_hr.t - 10.0, truth.truth_hr.t,
                           truth.truth_hr.v)
        assert np.max(np.abs(session.device_hr.v - lagged)) < 1e-9

    def test_is_noise_exceeds_ls_noise_with_ma_gain(self):
        dev = DeviceErrorModel(name="wrist", bias_bpm=(), noise_sd_bpm=0.3,
                               ma_gain_bpm_per_kcpm=4.0, lag_s=10.0,
                               cadence_s=5.0)
        cfg = CohortConfig(n_participants=2, seed=5, devices=(dev,), **SHORT)
        for session, truth in generate_cohort(cfg):
            lagged = np.interp(session.device_hr.t - 10.0, truth.truth_hr.t,
                               truth.truth_hr.v)
            err = np.abs(session.device_hr.v - lagged)
            states = np.array([hio.state_at(session.schedule, t)
                               for t in session.device_hr.t], dtype=object)
            assert err[states == "IS"].mean() > err[states == "LS"].mean()

    def test_jogging_reaches_mpa_or_vpa(self):
        cfg = CohortConfig(n_participants=1, seed=9, **SHORT)
        session, truth = generate_participant(cfg, 0)
        cpm = compute_counts(session.accel, "va")
        speeds = np.interp(cpm.t + 30.0, truth.intensity.t, truth.intensity.v)
        jog = cpm.v[speeds > 7.0]
        assert jog.size > 0
        scheme = get_scheme("crouter_va")
        assert all(classify_pal(v, scheme) >= 2 for v in jog)


class TestInjection:
    def _session(self):
        cfg = CohortConfig(n_participants=1, seed=21, **SHORT)
        return generate_participant(cfg, 0)

    def test_identity_profile_leaves_stream_unchanged(self):
        session, truth = self._session()
        patched = inject_known_miscalibration(session, truth,
                                              lambda hr, cpm, state: hr)
        assert np.array_equal(patched.device_hr.v, session.device_hr.v)

    def test_additive_is_bias_raises_is_error_only(self):
        cfg = CohortConfig(n_participants=1, seed=21,
                           devices=(quiet_device(),), **SHORT)
        session, truth = generate_participant(cfg, 0)
        patched = inject_known_miscalibration(
            session, truth,
            lambda hr, cpm, state: hr + (5.0 if state == "IS" else 0.0))
        states = np.array([hio.state_at(session.schedule, t)
                           for t in session.device_hr.t], dtype=object)
        lagged = np.interp(session.device_hr.t - 10.0, truth.truth_hr.t,
                           truth.truth_hr.v)
        for state, expected in (("IS", 5.0), ("RS", 0.0), ("LS", 0.0)):
            mask = states == state
            after = np.mean(np.abs(patched.device_hr.v[mask] - lagged[mask]))
            assert abs(after - expected) < 1e-9

    def test_multiplicative_profile_scales_error(self):
        quiet_cfg = CohortConfig(n_participants=1, seed=21,
                                 devices=(quiet_device(),), **SHORT)
        session, truth = generate_participant(quiet_cfg, 0)
        patched = inject_known_miscalibration(session, truth,
                                              lambda hr, cpm, state: 1.1 * hr)
        truth_lagged = np.interp(session.device_hr.t - 10.0,
                                 truth.truth_hr.t, truth.truth_hr.v)
        truth_now = np.interp(session.device_hr.t, truth.truth_hr.t,
                              truth.truth_hr.v)
        raw_mae = np.mean(np.abs(patched.device_hr.v - truth_lagged))
        assert abs(raw_mae - 0.1 * truth_now.mean()) < 0.5

    def test_ground_truth_untouched(self):
        session, truth = self._session()
        before = truth.truth_hr.v.copy()
        inject_known_miscalibration(session, truth,
                                    lambda hr, cpm, state: hr + 10.0)
        assert np.array_equal(truth.truth_hr.v, before)


class TestSignalRecovery:
    def test_extraction_tracks_truth_outside_transitions(self):
        cfg = CohortConfig(n_participants=2, seed=33, **SHORT)
        for session, truth in generate_cohort(cfg):
            hr = sig.ecg_to_hr(session.ecg)
            truth_at = np.interp(hr.t, truth.truth_hr.t, truth.truth_hr.v)
            boundaries = [iv[1] for iv in session.schedule[1:]]
            speeds = np.interp(hr.t, truth.intensity.t, truth.intensity.v)
            keep = np.ones(len(hr), dtype=bool)
            for b in boundaries:
                keep &= np.abs(hr.t - b) > 10.0
            err = np.abs(hr.v - truth_at)[keep]
            assert err.mean() < 1.0

    def test_extracted_hr_within_physiological_band(self):
        cfg = CohortConfig(n_participants=1, seed=13, **SHORT)
        session, _ = generate_participant(cfg, 0)
        hr = sig.ecg_to_hr(session.ecg)
        sig.validate_hr(hr)
