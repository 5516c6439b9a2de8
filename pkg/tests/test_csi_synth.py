import math
from dataclasses import replace

import numpy as np
import pytest
from sklearn.neighbors import NearestCentroid
from sklearn.preprocessing import StandardScaler

from src.csi_data import IN_DISTRIBUTION, ActivityLabel, load_recordings
from src.csi_synth import (
    SPEED_OF_LIGHT,
    ChannelConfig,
    MotionProfile,
    linear_array,
    standard_profiles,
    standard_suite,
    synthesize_recording,
    write_suite,
)
from src.errors import ConfigurationError, DomainError


def test_frame_count_and_shape(small_channel):
    rec = synthesize_recording(standard_profiles()[ActivityLabel.WALK], small_channel, 4.0, 10.0)
    assert rec.values.shape == (40, 16, 4)
    assert rec.values.dtype == np.float32
    assert rec.frame_rate_hz == 10.0 and not rec.normalized


def test_empty_room_without_noise_is_static(small_channel):
    quiet = replace(small_channel, noise_std=0.0)
    rec = synthesize_recording(standard_profiles()[ActivityLabel.EMPTY], quiet, 2.0, 10.0)
    np.testing.assert_allclose(rec.values, np.broadcast_to(rec.values[0], rec.values.shape), rtol=1e-6)


def test_motion_adds_temporal_variance(small_channel):
    quiet = replace(small_channel, noise_std=0.0)
    profiles = standard_profiles()
    walk = synthesize_recording(profiles[ActivityLabel.WALK], quiet, 4.0, 10.0)
    sit = synthesize_recording(profiles[ActivityLabel.SIT], quiet, 4.0, 10.0)
    assert walk.values.var(axis=0).mean() > 10 * max(sit.values.var(axis=0).mean(), 1e-6)


def test_same_seed_is_bit_identical_and_seed_matters(small_channel):
    profile = standard_profiles()[ActivityLabel.RUN]
    a = synthesize_recording(profile, small_channel, 2.0, 10.0)
    b = synthesize_recording(profile, small_channel, 2.0, 10.0)
    assert a.values.tobytes() == b.values.tobytes()
    c = synthesize_recording(profile, replace(small_channel, seed=4), 2.0, 10.0)
    assert not np.array_equal(a.values, c.values)


def test_noise_is_clipped_at_zero(small_channel):
    noisy = replace(small_channel, noise_std=5.0)
    rec = synthesize_recording(standard_profiles()[ActivityLabel.JUMP], noisy, 1.0, 10.0)
    assert rec.values.min() >= 0.0


def test_antennas_see_different_spectra(small_channel):
    rec = synthesize_recording(standard_profiles()[ActivityLabel.EMPTY], replace(small_channel, noise_std=0.0),
                               1.0, 10.0)
    first = rec.values[0]
    for a in range(1, 4):
        assert not np.allclose(first[:, 0], first[:, a])


def test_line_of_sight_path_geometry():
    config = ChannelConfig(subcarriers=16)
    delay, gain = config.path_table(0)[0]
    length = math.hypot(8.0, 0.09)
    assert delay == pytest.approx(length / SPEED_OF_LIGHT, rel=1e-9)
    assert gain == pytest.approx(4.0 / length, rel=1e-9)
    assert len(config.resolved_paths()) == 2 + config.reflectors


def test_reflectors_follow_the_seed():
    a = ChannelConfig(subcarriers=16, seed=0).resolved_paths()
    b = ChannelConfig(subcarriers=16, seed=0).resolved_paths()
    c = ChannelConfig(subcarriers=16, seed=1).resolved_paths()
    assert a == b and a != c


def test_subcarriers_span_the_bandwidth():
    config = ChannelConfig(subcarriers=16)
    freqs = config.subcarrier_freqs()
    assert freqs.mean() == pytest.approx(config.carrier_hz)
    assert freqs[1] - freqs[0] == pytest.approx(config.bandwidth_hz / 16)


def test_configuration_errors():
    with pytest.raises(ConfigurationError):
        ChannelConfig(subcarriers=4)
    with pytest.raises(ConfigurationError):
        ChannelConfig(antenna_positions=linear_array(4, spacing_m=0.02))
    with pytest.raises(ConfigurationError):
        ChannelConfig(antenna_positions=())


def test_profile_and_duration_errors(small_channel):
    with pytest.raises(DomainError):
        MotionProfile(ActivityLabel.EMPTY, lambda t: np.zeros((len(t), 2)), body_cross_section=0.5)
    with pytest.raises(DomainError):
        MotionProfile(ActivityLabel.WALK, lambda t: np.zeros((len(t), 2)), body_cross_section=-1.0)
    with pytest.raises(DomainError):
        synthesize_recording(standard_profiles()[ActivityLabel.SIT], small_channel, 0.0, 10.0)
    with pytest.raises(DomainError):
        synthesize_recording(standard_profiles()[ActivityLabel.SIT], small_channel, 1.0, -5.0)


def test_preset_speeds_are_ordered():
    p = standard_profiles()
    assert p[ActivityLabel.RUN].speed_mps > p[ActivityLabel.WALK].speed_mps > p[ActivityLabel.SIT].speed_mps
    assert p[ActivityLabel.EMPTY].body_cross_section == 0.0
    assert set(p) == set(ActivityLabel)


def test_suite_subset_and_written_dataset(tmp_path, small_channel):
    suite = standard_suite(small_channel, 1.0, 10.0, activities=[ActivityLabel.SIT, ActivityLabel.SQUAT])
    assert list(suite) == [ActivityLabel.SIT, ActivityLabel.SQUAT]

    write_suite(tmp_path, small_channel, 1.0, 10.0)
    loaded = load_recordings(tmp_path)
    assert [r.activity for r in loaded] == list(ActivityLabel)
    assert all(r.values.shape == (10, 16, 4) for r in loaded)


def _desk_channel(seed=0):
    return ChannelConfig(subcarriers=64, antenna_positions=linear_array(4), seed=seed)


def _window_features(values, frames=40, stride=10):
    """Per-antenna (mean, log temporal variance) of each window."""
    rows = []
    for start in range(0, values.shape[0] - frames + 1, stride):
        w = values[start:start + frames].astype(np.float64)
        rows.append(np.concatenate([w.mean(axis=(0, 1)), np.log(w.var(axis=0).mean(axis=0) + 1e-9)]))
    return np.array(rows)


def test_nearest_centroid_separates_the_activities():
    suite = standard_suite(_desk_channel(), 20.0, 10.0, activities=IN_DISTRIBUTION)
    X_train, y_train, X_test, y_test = [], [], [], []
    for k, label in enumerate(IN_DISTRIBUTION):
        feats = _window_features(suite[label].values)
        cut = int(0.7 * len(feats))
        X_train.append(feats[:cut])
        y_train += [k] * cut
        X_test.append(feats[cut:])
        y_test += [k] * (len(feats) - cut)
    scaler = StandardScaler().fit(np.vstack(X_train))
    clf = NearestCentroid().fit(scaler.transform(np.vstack(X_train)), y_train)
    accuracy = np.mean(clf.predict(scaler.transform(np.vstack(X_test))) == np.array(y_test))
    assert accuracy > 0.6


def test_antennas_are_decorrelated():
    suite = standard_suite(_desk_channel(), 8.0, 10.0, activities=IN_DISTRIBUTION)
    for label, rec in suite.items():
        corr = np.corrcoef(rec.values.reshape(-1, rec.antennas).T.astype(np.float64))
        pairs = np.abs(corr[np.triu_indices(rec.antennas, k=1)])
        assert pairs.mean() < 0.9, label


@pytest.mark.parametrize("seed", range(10))
def test_variance_ordering_holds_across_seeds(seed):
    suite = standard_suite(_desk_channel(seed), 20.0, 10.0,
                           activities=[ActivityLabel.WALK, ActivityLabel.RUN, ActivityLabel.SIT])
    var = {label: rec.values.var(axis=0).mean() for label, rec in suite.items()}
    assert var[ActivityLabel.RUN] > var[ActivityLabel.WALK] > var[ActivityLabel.SIT]
