import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_convolve_same, dft_bin_amplitude
from spoofkit.audio_io import Waveform
from spoofkit.augment import (
    FirFilter,
    SpliceRecord,
    apply_decision,
    apply_fir,
    build_epoch_plan,
    crossfade_samples,
    design_lowpass_fir,
    random_fir,
    sample_fir_config,
    splice_partial_fake,
)

SR = 16000


def tone(freq, n=16000, sr=SR):
    return np.sin(2 * np.pi * freq * np.arange(n) / sr)


def manifest(n_gen=100, n_spf=100):
    return [{"id": f"g{i:03d}", "label": "genuine"} for i in range(n_gen)] + [
        {"id": f"s{i:03d}", "label": "spoof"} for i in range(n_spf)
    ]


class TestDesign:
    @pytest.mark.parametrize("taps", [51, 101, 151])
    @pytest.mark.parametrize("cutoff", [0.1, 0.21875, 0.45])
    def test_symmetric_unit_dc(self, taps, cutoff):
        f = design_lowpass_fir(cutoff, taps)
        assert f.num_taps == taps
        assert np.array_equal(f.taps, f.taps[::-1])
        assert f.taps.sum() == pytest.approx(1.0, abs=1e-12)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            design_lowpass_fir(0.2, 100)
        for c in (0.0, -0.1, 0.6):
            with pytest.raises(ValueError):
                design_lowpass_fir(c, 101)

    def test_nyquist_cutoff_is_near_delta(self):
        f = design_lowpass_fir(0.5, 101)
        x = np.random.default_rng(0).standard_normal(4000)
        y = apply_fir(Waveform(x), f).samples
        ratio_db = 20 * np.log10(np.sqrt(np.mean(y**2)) / np.sqrt(np.mean(x**2)))
        assert abs(ratio_db) < 0.5

    def test_passband_and_stopband_by_dft(self):
        f = design_lowpass_fir(3500 / SR, 101)
        for freq, lo, hi in [(1000, -1.0, 1.0), (7000, -np.inf, -40.0)]:
            y = apply_fir(Waveform(tone(freq, 1600)), f).samples[200:1400]
            gain = 20 * np.log10(dft_bin_amplitude(y, freq, SR))
            assert lo <= gain <= hi

    @pytest.mark.parametrize("cutoff_hz", [3000, 4000, 6000])
    def test_stopband_beyond_one_and_a_half_cutoff(self, cutoff_hz):
        f = design_lowpass_fir(cutoff_hz / SR, 101)
        freqs = np.arange(int(1.5 * cutoff_hz), SR // 2, 50)
        H = np.abs(np.exp(-2j * np.pi * np.outer(freqs / SR, np.arange(101))) @ f.taps)
        assert np.all(20 * np.log10(H) <= -40)


class TestSampling:
    def test_fixed_seed_reproducible(self):
        a = sample_fir_config("NB", np.random.default_rng(5))
        b = sample_fir_config("NB", np.random.default_rng(5))
        assert a == b

    @pytest.mark.parametrize("band,lo,hi", [("NB", 3000, 4000), ("WB", 6000, 7800)])
    def test_monte_carlo_ranges(self, band, lo, hi):
        rng = np.random.default_rng(1)
        draws = [sample_fir_config(band, rng) for _ in range(10_000)]
        cut = np.array([d[0] for d in draws]) * SR
        taps = np.array([d[1] for d in draws])
        assert cut.min() >= lo and cut.max() <= hi
        assert np.all(taps % 2 == 1)
        assert taps.min() >= 51 and taps.max() <= 151

    def test_random_fir_tags_band(self):
        f = random_fir("WB", np.random.default_rng(0))
        assert f.band_class == "WB"
        assert 6000 <= f.cutoff_norm * SR <= 7800


class TestApply:
    def test_impulse_returns_taps(self):
        f = design_lowpass_fir(0.2, 7)
        x = np.zeros(21)
        x[10] = 1.0
        y = apply_fir(Waveform(x), f).samples
        assert np.array_equal(y[7:14], f.taps)

    def test_dc_interior(self):
        f = design_lowpass_fir(0.2, 51)
        y = apply_fir(Waveform(np.full(300, 0.5)), f).samples
        assert np.max(np.abs(y[25:-25] - 0.5)) <= 1e-9

    def test_matches_brute_force_64_by_7(self):
        x = np.random.default_rng(3).standard_normal(64)
        f = design_lowpass_fir(0.3, 7)
        assert np.max(np.abs(apply_fir(Waveform(x), f).samples - brute_convolve_same(x, f.taps))) <= 1e-12

    def test_filter_longer_than_signal(self):
        with pytest.raises(ValueError):
            apply_fir(Waveform(np.zeros(10)), design_lowpass_fir(0.2, 11))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
    def test_linearity(self, seed, a, b):
        rng = np.random.default_rng(seed)
        x, y = rng.standard_normal(300), rng.standard_normal(300)
        f = random_fir("NB", rng)
        lhs = apply_fir(Waveform(a * x + b * y), f).samples
        rhs = a * apply_fir(Waveform(x), f).samples + b * apply_fir(Waveform(y), f).samples
        assert np.max(np.abs(lhs - rhs)) <= 1e-10


class TestSplice:
    def test_self_splice_identity(self):
        rng = np.random.default_rng(0)
        host = Waveform(rng.standard_normal(5000))
        out, rec = splice_partial_fake(host, host, rng, start=1200, donor_offset=1200, length=2000)
        assert np.max(np.abs(out.samples - host.samples)) <= 1e-12
        assert rec.start_sample == rec.donor_offset == 1200

    def test_reproducible_and_interior_equals_donor(self):
        host = Waveform(np.random.default_rng(1).standard_normal(8000))
        donor = Waveform(np.random.default_rng(2).standard_normal(9000))
        a, ra = splice_partial_fake(host, donor, np.random.default_rng(9))
        b, rb = splice_partial_fake(host, donor, np.random.default_rng(9))
        assert ra == rb and np.array_equal(a.samples, b.samples)
        fade = crossfade_samples(ra.length_samples, SR)
        s, n, o = ra.start_sample, ra.length_samples, ra.donor_offset
        assert np.array_equal(a.samples[s + fade : s + n - fade], donor.samples[o + fade : o + n - fade])
        assert np.array_equal(a.samples[:s], host.samples[:s])
        assert np.array_equal(a.samples[s + n :], host.samples[s + n :])

    def test_zero_length_rejected(self):
        w = Waveform(np.ones(100))
        with pytest.raises(ValueError):
            splice_partial_fake(w, w, np.random.default_rng(0), length=0)

    def test_short_donor_rejected(self):
        with pytest.raises(ValueError):
            splice_partial_fake(Waveform(np.ones(1000)), Waveform(np.ones(50)), np.random.default_rng(0))

    def test_record_validation(self):
        with pytest.raises(ValueError):
            SpliceRecord("h", "d", 90, 20, 0).validate(100)
        with pytest.raises(ValueError):
            SpliceRecord("h", "d", 0, 100, 0).validate(100)
        rec = SpliceRecord("h", "d", 10, 20, 3)
        assert SpliceRecord.from_dict(rec.to_dict()) == rec

    @settings(max_examples=60, deadline=None)
    @given(st.integers(20, 4000), st.integers(0, 2**32 - 1))
    def test_bounds_property(self, n, seed):
        rng = np.random.default_rng(seed)
        host = Waveform(rng.standard_normal(n))
        donor = Waveform(rng.standard_normal(n + int(rng.integers(0, 500))))
        out, rec = splice_partial_fake(host, donor, rng)
        assert len(out) == n
        rec.validate(n)
        assert 0.1 * n <= rec.length_samples <= 0.9 * n


class TestPlan:
    def test_twenty_percent_of_genuine(self):
        for seed in range(5):
            plan = build_epoch_plan(manifest(), seed)
            hosts = plan.splice_hosts()
            assert len(hosts) == 20
            assert all(h.startswith("g") for h in hosts)
            assert all(plan.decisions[h].splice.donor_id != h for h in hosts)

    def test_fir_prob_bounds(self):
        assert build_epoch_plan(manifest(), 3, fir_prob=0.0).fir_ids() == []
        a = build_epoch_plan(manifest(), 3, fir_prob=1.0)
        b = build_epoch_plan(manifest(), 3, fir_prob=1.0)
        assert len(a.fir_ids()) == 200
        assert a.splice_hosts() == b.splice_hosts()
        for uid in a.decisions:
            fa, fb = a.decisions[uid].fir, b.decisions[uid].fir
            assert np.array_equal(fa.taps, fb.taps)
            assert a.decisions[uid].splice == b.decisions[uid].splice

    def test_different_seeds_differ(self):
        assert build_epoch_plan(manifest(), 1).splice_hosts() != build_epoch_plan(manifest(), 2).splice_hosts()

    def test_invalid_manifests(self):
        with pytest.raises(ValueError):
            build_epoch_plan([], 0)
        with pytest.raises(ValueError):
            build_epoch_plan([{"id": "a", "label": "genuine"}] * 2, 0)

    def test_apply_decision_replays_exactly(self):
        rows = manifest(10, 10)
        rng = np.random.default_rng(4)
        waves = {r["id"]: Waveform(rng.uniform(-0.5, 0.5, 3000)) for r in rows}
        plan = build_epoch_plan(rows, 11, fir_prob=1.0)
        for uid in plan.splice_hosts():
            a, ra = apply_decision(uid, plan.decisions[uid], waves.__getitem__)
            b, rb = apply_decision(uid, plan.decisions[uid], waves.__getitem__)
            assert ra == rb and np.array_equal(a.samples, b.samples)
            assert len(a) == len(waves[uid])
        assert isinstance(plan.decisions["s000"].fir, FirFilter)
