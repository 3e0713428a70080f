import struct
import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from echorange.audio import AudioClip, mix, read_wav, write_wav
from echorange.errors import CorruptFileError, ShapeError, UnsupportedEncodingError, WavFormatError


def test_float32_round_trip_bit_exact(tmp_path, noise_clip):
    clip = noise_clip(5000, 3)
    write_wav(clip, tmp_path / "a.wav", "float32")
    back = read_wav(tmp_path / "a.wav")
    assert back.sample_rate == clip.sample_rate
    assert back.samples.tobytes() == clip.samples.tobytes()


@pytest.mark.parametrize("encoding,bits", [("pcm16", 16), ("pcm24", 24)])
def test_integer_round_trip_within_quantization_step(tmp_path, noise_clip, encoding, bits):
    clip = noise_clip(4000, 4, scale=0.5)
    write_wav(clip, tmp_path / "a.wav", encoding)
    back = read_wav(tmp_path / "a.wav")
    assert np.max(np.abs(back.samples - clip.samples)) <= 2.0 ** -(bits - 1)


def test_full_scale_values_within_step(tmp_path):
    clip = AudioClip(np.array([[1.0], [-1.0], [0.0]]), 24000)
    for enc, bits in (("pcm16", 16), ("pcm24", 24)):
        write_wav(clip, tmp_path / "a.wav", enc)
        back = read_wav(tmp_path / "a.wav").samples[:, 0]
        assert np.max(np.abs(back - [1, -1, 0])) <= 2.0 ** -(bits - 1)
        assert back[1] == -1.0


def test_clamp_rule_pcm16(tmp_path):
    write_wav(AudioClip(np.array([[1.5], [-2.0]]), 24000), tmp_path / "c.wav", "pcm16")
    raw = (tmp_path / "c.wav").read_bytes()
    assert struct.unpack("<hh", raw[-4:]) == (32767, -32768)


def test_empty_clip(tmp_path):
    clip = AudioClip(np.zeros((0, 4)), 24000)
    write_wav(clip, tmp_path / "e.wav", "pcm16")
    back = read_wav(tmp_path / "e.wav")
    assert back.n_frames == 0 and back.n_channels == 4


def test_header_fields_against_reference_writer(tmp_path):
    # reference file from the stdlib writer
    samples = (np.arange(24000 * 4) % 2000 - 1000).astype("<i2")
    ref = tmp_path / "ref.wav"
    with wave.open(str(ref), "wb") as w:
        w.setnchannels(4)
        w.setsampwidth(2)
        w.setframerate(24000)
        w.writeframes(samples.tobytes())
    clip = read_wav(ref)
    assert (clip.n_frames, clip.n_channels, clip.sample_rate) == (24000, 4, 24000)
    np.testing.assert_array_equal(clip.samples.ravel(), samples / 32768.0)

    ours = tmp_path / "ours.wav"
    write_wav(clip, ours, "pcm16")
    a, b = ref.read_bytes(), ours.read_bytes()
    assert a[:4] == b[:4] == b"RIFF"
    assert a[8:16] == b[8:16] == b"WAVEfmt "
    # fmt body: code, channels, rate, byte rate, block align, bits
    assert a[20:36] == b[20:36] == struct.pack("<HHIIHH", 1, 4, 24000, 24000 * 8, 8, 16)
    assert a[36:44] == b[36:44]
    assert a == b


def test_float32_header(tmp_path, noise_clip):
    write_wav(noise_clip(10, 2), tmp_path / "f.wav", "float32")
    raw = (tmp_path / "f.wav").read_bytes()
    assert struct.unpack_from("<HHIIHH", raw, 20) == (3, 2, 24000, 24000 * 8, 8, 32)


def test_malformed_header(tmp_path):
    p = tmp_path / "bad.wav"
    p.write_bytes(b"RIFX....WAVE")
    with pytest.raises(WavFormatError):
        read_wav(p)


def test_unsupported_encoding(tmp_path):
    p = tmp_path / "u8.wav"
    with wave.open(str(p), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(1)
        w.setframerate(8000)
        w.writeframes(bytes(100))
    with pytest.raises(UnsupportedEncodingError):
        read_wav(p)
    with pytest.raises(UnsupportedEncodingError):
        write_wav(AudioClip(np.zeros((3, 1)), 8000), tmp_path / "x.wav", "pcm8")


def test_truncated_data_chunk(tmp_path, noise_clip):
    p = tmp_path / "t.wav"
    write_wav(noise_clip(100, 2), p, "pcm16")
    p.write_bytes(p.read_bytes()[:-50])
    with pytest.raises(CorruptFileError):
        read_wav(p)


def test_unwritable_path(noise_clip, tmp_path):
    with pytest.raises(OSError):
        write_wav(noise_clip(10, 1), tmp_path / "missing" / "x.wav")


def test_clip_invariants():
    with pytest.raises(ValueError):
        AudioClip(np.array([[np.nan]]), 24000)
    with pytest.raises(ValueError):
        AudioClip(np.zeros((4, 1)), 0)
    clip = AudioClip(np.zeros(5), 24000)
    assert clip.n_channels == 1
    with pytest.raises(ValueError):
        clip.samples[0, 0] = 1.0


def test_mix_examples(noise_clip):
    a = noise_clip(100, 2)
    b = noise_clip(50, 2)
    out = mix(a, b, 0, 0.0)
    np.testing.assert_array_equal(out.samples, a.samples)

    silence = AudioClip(np.zeros((10, 2)), 24000)
    out = mix(silence, b, 7, 1.0)
    assert out.n_frames == 57
    np.testing.assert_array_equal(out.samples[:7], 0)
    np.testing.assert_array_equal(out.samples[7:], b.samples)

    np.testing.assert_array_equal(mix(a, a, 0, 1.0).samples, 2 * a.samples)

    long = mix(b, a, 0, 1.0)
    assert long.n_frames == 100


def test_mix_mismatch(noise_clip):
    with pytest.raises(ShapeError):
        mix(noise_clip(10, 2), noise_clip(10, 3))
    with pytest.raises(ShapeError):
        mix(noise_clip(10, 2), AudioClip(np.zeros((10, 2)), 16000))


_samples = arrays(np.float32, st.tuples(st.integers(0, 40), st.integers(1, 4)), elements=st.floats(-1, 1, width=32))


@settings(max_examples=40, deadline=None)
@given(_samples, st.integers(0, 20), st.floats(-2, 2), st.floats(-2, 2))
def test_mix_linear_in_gain(x, offset, g1, g2):
    a = AudioClip(x, 24000)
    b = AudioClip(x[::-1].copy(), 24000)
    one = mix(a, b, offset, g1 + g2).samples
    two = mix(mix(a, b, offset, g1), b, offset, g2).samples
    np.testing.assert_allclose(one, two, atol=1e-6)


@settings(max_examples=30, deadline=None)
@given(_samples)
def test_float32_round_trip_property(tmp_path_factory, x):
    p = tmp_path_factory.mktemp("rt") / "x.wav"
    clip = AudioClip(x, 24000)
    write_wav(clip, p, "float32")
    assert read_wav(p).samples.tobytes() == clip.samples.tobytes()
