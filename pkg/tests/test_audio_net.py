import numpy as np
import pytest
import torch

from avasd.audio_net import (
    AudioNetConfig,
    DSConvBlock,
    SincConv,
    SincDSNet,
    conv_output_length,
    count_parameters,
    log_compress,
    mel_spaced_cutoffs,
    sinc_kernel,
)


class TestSincKernel:
    def test_exactly_symmetric(self):
        k = sinc_kernel(300.0, 3000.0, 251, 16000)
        np.testing.assert_array_equal(k, k[::-1])

    def test_zero_band_gives_zero_kernel(self):
        k = sinc_kernel(500.0, 500.0, 101, 16000)
        assert np.abs(k).max() == 0.0

    def test_full_band_gives_windowed_impulse(self):
        k = sinc_kernel(0.0, 8000.0, 101, 16000)
        assert k[50] == pytest.approx(1.0, abs=1e-15)
        off = np.delete(k, 50)
        assert np.abs(off).max() < 1e-12

    def test_center_tap_formula(self):
        f1, f2, sr = 700.0, 2900.0, 16000
        k = sinc_kernel(f1, f2, 251, sr)
        assert k[125] == pytest.approx(2.0 * (f2 - f1) / sr, rel=1e-12)

    def test_band_pass_selectivity(self):
        # Passband response must dominate stopband response by 20+ dB.
        sr = 16000
        k = sinc_kernel(1000.0, 2000.0, 251, sr)
        freqs = np.fft.rfftfreq(4096, d=1.0 / sr)
        mag = np.abs(np.fft.rfft(k, 4096))
        in_band = mag[(freqs > 1200) & (freqs < 1800)].min()
        stop = mag[(freqs < 500) | (freqs > 3500)].max()
        assert in_band / stop > 10.0

    def test_even_length_rejected(self):
        with pytest.raises(ValueError, match="odd"):
            sinc_kernel(100.0, 200.0, 250, 16000)

    def test_invalid_cutoffs_rejected(self):
        with pytest.raises(ValueError):
            sinc_kernel(2000.0, 1000.0, 251, 16000)
        with pytest.raises(ValueError):
            sinc_kernel(-10.0, 1000.0, 251, 16000)
        with pytest.raises(ValueError):
            sinc_kernel(100.0, 9000.0, 251, 16000)


class TestLogCompress:
    def test_values(self):
        x = torch.tensor([0.0, 1.0, -1.0, np.e - 1.0])
        y = log_compress(x)
        expected = torch.tensor([0.0, np.log(2.0), np.log(2.0), 1.0])
        torch.testing.assert_close(y, expected.float())

    def test_sign_invariant_and_monotone(self):
        x = torch.linspace(-5, 5, 41)
        y = log_compress(x)
        torch.testing.assert_close(y, log_compress(-x))
        pos = log_compress(torch.linspace(0, 5, 21))
        assert torch.all(pos[1:] > pos[:-1])


class TestSincConv:
    def test_mel_init_covers_range(self):
        low, high = mel_spaced_cutoffs(80, 30.0, 16000)
        assert low[0] == pytest.approx(30.0)
        assert high[-1] == pytest.approx(8000.0)
        assert np.all(np.diff(low) > 0)
        np.testing.assert_allclose(high[:-1], low[1:])

    def test_constraint_map_always_valid(self):
        conv = SincConv(16, 33, 4, 16000)
        rng = np.random.default_rng(0)
        with torch.no_grad():
            conv.low_hz.copy_(torch.tensor(
                rng.uniform(-20000, 20000, 16), dtype=torch.float32))
            conv.band_hz.copy_(torch.tensor(
                rng.uniform(-20000, 20000, 16), dtype=torch.float32))
        f1, f2 = conv.cutoffs()
        assert torch.all(f1 >= 0)
        assert torch.all(f1 < f2)
        assert torch.all(f2 <= 8000.0)

    def test_filters_match_reference_kernels(self):
        conv = SincConv(8, 65, 4, 16000)
        f1, f2 = (t.detach().numpy() for t in conv.cutoffs())
        filt = conv.filters().detach().numpy()[:, 0, :]
        for i in range(8):
            ref = sinc_kernel(float(f1[i]), float(f2[i]), 65, 16000)
            np.testing.assert_allclose(filt[i], ref, atol=1e-6)

    def test_output_length(self):
        conv = SincConv(4, 33, 8, 16000)
        y = conv(torch.randn(2, 1, 256))
        assert tuple(y.shape) == (2, 4, conv_output_length(256, 33, 8, 0))

    def test_short_input_rejected(self):
        conv = SincConv(4, 33, 8, 16000)
        with pytest.raises(ValueError, match="at least 33"):
            conv(torch.randn(1, 1, 20))


class TestSincDSNet:
    def test_forward_shape_and_embed_dim(self):
        net = SincDSNet()
        assert net.embed_dim == 160
        y = net(torch.randn(3, 5120))
        assert tuple(y.shape) == (3, 160)

    def test_accepts_channel_dim(self):
        net = SincDSNet()
        a = net(torch.randn(2, 5120))
        b = net(torch.randn(2, 1, 5120))
        assert a.shape == b.shape

    def test_bad_input_shape_rejected(self):
        net = SincDSNet()
        with pytest.raises(ValueError, match="waveforms"):
            net(torch.randn(2, 3, 5120))

    def test_complexity_micro_oracle(self):
        # 2 sinc filters (k=5, stride 2) + one block (2 -> 3 ch, k=3):
        # params: sinc 2*2=4, depthwise 2*3+2=8, bn(2)=4, pointwise 2*3+3=9,
        # bn(3)=6 -> 31.  FLOPs count conv MACs only: at 16 input samples
        # L0=6, L1=6; MACs = 2*5*6 + 2*3*6 + 2*3*6 = 132.
        cfg = AudioNetConfig(num_filters=2, kernel_length=5, stride=2,
                             block_channels=[3], block_kernel=3, block_stride=1)
        net = SincDSNet(cfg)
        params, mflop = net.complexity(16)
        assert params == 31
        assert mflop == pytest.approx(264 / 1e6)

    def test_complexity_params_match_module(self):
        net = SincDSNet()
        params, _ = net.complexity(5120)
        assert params == count_parameters(net)

    def test_conv1x1_param_count(self):
        assert count_parameters(torch.nn.Conv1d(4, 8, 1, bias=False)) == 32

    def test_export_filterbank(self, tmp_path):
        import csv

        net = SincDSNet(AudioNetConfig(num_filters=4))
        out = tmp_path / "bank.csv"
        net.export_filterbank(out, freq_points=16)
        with out.open() as fh:
            rows = list(csv.reader(fh))
        assert rows[0][:3] == ["filter", "f_low_hz", "f_high_hz"]
        assert len(rows) == 5
        for row in rows[1:]:
            assert float(row[1]) < float(row[2])
            assert len(row) == 3 + 16


class TestDSConvBlock:
    def test_depthwise_then_pointwise_shapes(self):
        block = DSConvBlock(4, 6, kernel=9, stride=2)
        y = block(torch.randn(2, 4, 32))
        assert tuple(y.shape) == (2, 6, 16)

    def test_leaky_slope(self):
        # eval mode: fresh batch norms are identity (running mean 0, var 1).
        block = DSConvBlock(1, 1, kernel=1, stride=1).eval()
        with torch.no_grad():
            block.depthwise.weight.fill_(1.0)
            block.depthwise.bias.zero_()
            block.pointwise.weight.fill_(1.0)
            block.pointwise.bias.zero_()
        with torch.no_grad():
            y = block(torch.tensor([[[-1.0]]]))
        # -1 -> leaky(-1) = -0.01 -> pointwise -> leaky(-0.01) = -1e-4,
        # up to the 1/sqrt(1 + eps) factor each norm applies in eval mode.
        assert float(y) == pytest.approx(-1e-4, rel=1e-4)
