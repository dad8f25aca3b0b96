"""Benchmark harness protocol: sample counts, timed-region toggles, fingerprints."""

import numpy as np
import pytest

from shuffleseg.benchmark import (
    BenchConfig,
    bench,
    format_result,
    result_csv,
    synthetic_image,
)
from shuffleseg.graph import GraphBuilder
from shuffleseg.weights import init_random


def tiny_graph(classes=4):
    b = GraphBuilder()
    n = b.add("input", "input", channels=3)
    n = b.add("conv", "conv", [n], in_channels=3, out_channels=classes,
              kernel=[3, 3], stride=[2, 2], rate=[1, 1], groups=1, bias=True)
    n = b.add("resize", "resize", [n], target="input", align_corners=True)
    b.add("argmax", "argmax", [n])
    return b.build()


def argmax_heavy_graph(classes=24):
    """Full-resolution pointwise conv straight into argmax: the standardize
    and argmax stages dominate the frame, making region toggles measurable."""
    b = GraphBuilder()
    n = b.add("input", "input", channels=3)
    n = b.add("conv", "conv", [n], in_channels=3, out_channels=classes,
              kernel=[1, 1], stride=[1, 1], rate=[1, 1], groups=1, bias=True)
    b.add("argmax", "argmax", [n])
    return b.build()


@pytest.fixture(scope="module")
def tiny():
    g = tiny_graph()
    return g, init_random(g, seed=0)


class TestProtocol:
    def test_single_frame_has_zero_variance(self, tiny):
        g, m = tiny
        cfg = BenchConfig(warmup_seconds=0.0, frames=1, input_size=(32, 32))
        result = bench(g, m, cfg)
        assert len(result.samples_ms) == 1
        assert result.variance_ms == 0.0

    def test_collects_exactly_configured_frames(self, tiny):
        g, m = tiny
        cfg = BenchConfig(warmup_seconds=0.05, frames=37, input_size=(32, 32))
        result = bench(g, m, cfg)
        assert len(result.samples_ms) == 37

    def test_fps_is_inverse_mean(self, tiny):
        g, m = tiny
        result = bench(g, m, BenchConfig(warmup_seconds=0.0, frames=5,
                                         input_size=(32, 32)))
        assert result.fps == pytest.approx(1000.0 / result.mean_ms)
        assert result.variance_ms == pytest.approx(
            np.asarray(result.samples_ms).var())

    def test_excluding_pre_post_reduces_mean(self):
        g = argmax_heavy_graph()
        m = init_random(g, seed=0)
        size = (256, 256)
        with_pp = bench(g, m, BenchConfig(warmup_seconds=0.2, frames=20,
                                          input_size=size))
        without = bench(g, m, BenchConfig(warmup_seconds=0.2, frames=20,
                                          input_size=size,
                                          include_pre_post=False))
        assert without.mean_ms < with_pp.mean_ms

    def test_repeat_runs_stable(self):
        # full 300-frame averaging windows keep run-to-run means within 10%;
        # one retry absorbs sporadic scheduler stalls on shared hosts (a
        # genuinely unstable harness fails both attempts)
        from shuffleseg.network import NetworkSpec, build_network

        g = build_network(NetworkSpec(num_classes=5))
        m = init_random(g, seed=0)
        cfg = BenchConfig(warmup_seconds=1.0, frames=300, input_size=(32, 32))
        rels = []
        for _ in range(2):
            a = bench(g, m, cfg)
            b = bench(g, m, cfg)
            rels.append(abs(a.mean_ms - b.mean_ms) / max(a.mean_ms, b.mean_ms))
            if rels[-1] < 0.10:
                break
        assert rels[-1] < 0.10, rels

    def test_warmup_runs_before_sampling(self, tiny, monkeypatch):
        g, m = tiny
        calls = {"n": 0}
        from shuffleseg import benchmark as bm
        real = bm.forward

        def counting_forward(*args, **kwargs):
            calls["n"] += 1
            return real(*args, **kwargs)

        monkeypatch.setattr(bm, "forward", counting_forward)
        bench(g, m, BenchConfig(warmup_seconds=0.05, frames=3, input_size=(32, 32)))
        assert calls["n"] > 3  # at least one warm-up frame ran


class TestFingerprint:
    def test_same_config_comparable(self, tiny):
        g, m = tiny
        cfg = BenchConfig(warmup_seconds=0.0, frames=2, input_size=(32, 32))
        assert bench(g, m, cfg).comparable_with(bench(g, m, cfg))

    def test_different_threads_not_comparable(self, tiny):
        g, m = tiny
        a = bench(g, m, BenchConfig(warmup_seconds=0.0, frames=2,
                                    input_size=(32, 32), threads=1))
        b = bench(g, m, BenchConfig(warmup_seconds=0.0, frames=2,
                                    input_size=(32, 32), threads=4))
        assert not a.comparable_with(b)
        assert a.fingerprint["threads"] == "1" and b.fingerprint["threads"] == "4"

    def test_serializations_include_fingerprint(self, tiny):
        g, m = tiny
        result = bench(g, m, BenchConfig(warmup_seconds=0.0, frames=2,
                                         input_size=(32, 32)))
        assert "env graph" in format_result(result)
        csv = result_csv(result)
        assert csv.startswith("frame,latency_ms")
        assert "fingerprint," in csv


class TestValidation:
    def test_invalid_config_rejected(self):
        with pytest.raises(ValueError):
            BenchConfig(frames=0)
        with pytest.raises(ValueError):
            BenchConfig(warmup_seconds=-1.0)
        with pytest.raises(ValueError):
            BenchConfig(threads=0)

    def test_mismatched_image_rejected(self, tiny):
        g, m = tiny
        cfg = BenchConfig(warmup_seconds=0.0, frames=1, input_size=(32, 32))
        with pytest.raises(ValueError, match="input size"):
            bench(g, m, cfg, image=synthetic_image((64, 64)))

    def test_invalid_weights_rejected(self, tiny):
        g, _ = tiny
        other = tiny_graph(classes=7)
        wrong = init_random(other, seed=0)
        with pytest.raises(ValueError, match="weights"):
            bench(g, wrong, BenchConfig(warmup_seconds=0.0, frames=1,
                                        input_size=(32, 32)))

    def test_synthetic_image_deterministic(self):
        a = synthetic_image((16, 24), seed=3)
        b = synthetic_image((16, 24), seed=3)
        np.testing.assert_array_equal(a, b)
        assert a.shape == (16, 24, 3) and a.dtype == np.uint8
