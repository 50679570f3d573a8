"""File format round trips, atomicity, model checkpointing."""

import struct

import numpy as np
import pytest

from asrfuse.a2a import MdnHead
from asrfuse.combine import FrameScoreStream, Hypothesis, NBestList
from asrfuse.features import FeatureSequence
from asrfuse.formats import (
    atomic_write,
    read_afm1,
    read_fss1,
    read_mdl1,
    read_nbest,
    read_transcripts_tsv,
    write_afm1,
    write_fss1,
    write_mdl1,
    write_nbest,
    write_transcripts_tsv,
)
from asrfuse.models import (
    load_mdn_checkpoint,
    load_ssl_checkpoint,
    save_mdn_checkpoint,
    save_ssl_checkpoint,
)
from asrfuse.numcore import derive_rng, make_rng
from asrfuse.ssl_objectives.trainers import SslConfig, build_ssl_model


class TestAfm1:
    def test_round_trip_byte_identical(self, tmp_path):
        seq = FeatureSequence(make_rng(0).normal(size=(7, 5)), 20.0, label="SSL")
        p1, p2 = tmp_path / "a.afm1", tmp_path / "b.afm1"
        write_afm1(p1, seq)
        loaded = read_afm1(p1, label="SSL")
        write_afm1(p2, loaded)
        assert p1.read_bytes() == p2.read_bytes()
        assert loaded.frame_period_ms == 20.0
        assert loaded.frames.shape == (7, 5)

    def test_header_layout(self, tmp_path):
        seq = FeatureSequence(np.zeros((3, 2)), 10.0)
        path = tmp_path / "x.afm1"
        write_afm1(path, seq)
        raw = path.read_bytes()
        assert raw[:4] == b"AFM1"
        rows, cols, period = struct.unpack("<IIf", raw[4:16])
        assert (rows, cols, period) == (3, 2, 10.0)
        assert len(raw) == 16 + 4 * 6

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.afm1"
        path.write_bytes(b"NOPE" + b"\0" * 16)
        with pytest.raises(ValueError, match="magic"):
            read_afm1(path)

    def test_truncated_rejected(self, tmp_path):
        seq = FeatureSequence(np.zeros((3, 2)), 10.0)
        path = tmp_path / "x.afm1"
        write_afm1(path, seq)
        path.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(ValueError, match="truncated"):
            read_afm1(path)


class TestFss1:
    def test_round_trip(self, tmp_path):
        stream = FrameScoreStream("utt7", ["a", "b", "<blk>"],
                                  -make_rng(1).random((4, 3)), 10.0)
        p1, p2 = tmp_path / "utt7.fss1", tmp_path / "again.fss1"
        write_fss1(p1, stream)
        loaded = read_fss1(p1)
        assert loaded.utt_id == "utt7"  # from the file name
        assert loaded.tokens == stream.tokens
        write_fss1(p2, loaded)
        assert p1.read_bytes() == p2.read_bytes()

    def test_unicode_inventory(self, tmp_path):
        stream = FrameScoreStream("u", ["你", "好"], np.zeros((1, 2)), 10.0)
        path = tmp_path / "u.fss1"
        write_fss1(path, stream)
        assert read_fss1(path).tokens == ["你", "好"]


class TestNbest:
    def test_round_trip(self, tmp_path):
        lists = [
            NBestList("u1", [Hypothesis("hello there", ["hello", "there"],
                                        {"ctc": 1.5, "tdnn": 2.0}),
                             Hypothesis("hello bear", ["hello", "bear"],
                                        {"ctc": 2.5, "tdnn": 1.0})]),
            NBestList("u2", [Hypothesis("bye", ["bye"], {"ctc": 0.5, "tdnn": 0.1})]),
        ]
        path = tmp_path / "nbest.jsonl"
        write_nbest(path, lists)
        loaded = read_nbest(path)
        assert [nb.utt_id for nb in loaded] == ["u1", "u2"]
        assert loaded[0].hyps[1].scores == {"ctc": 2.5, "tdnn": 1.0}
        path2 = tmp_path / "nbest2.jsonl"
        write_nbest(path2, loaded)
        assert path.read_bytes() == path2.read_bytes()

    def test_invalid_json_line_flagged(self, tmp_path):
        path = tmp_path / "broken.jsonl"
        good = '{"utt_id": "u", "hyps": [{"text": "a", "tokens": ["a"], "scores": {"s": 1.0}}]}'
        path.write_text(good + "\nnot json\n")
        with pytest.raises(ValueError, match="broken.jsonl:2"):
            read_nbest(path)


class TestTsv:
    def test_round_trip_with_metadata(self, tmp_path):
        rows = [
            ("u1", "hello world", {"speaker": "s1", "intelligibility": "VL"}),
            ("u2", "bye", {"speaker": "s2", "intelligibility": "H"}),
        ]
        path = tmp_path / "ref.tsv"
        write_transcripts_tsv(path, rows)
        texts, meta = read_transcripts_tsv(path)
        assert texts == {"u1": "hello world", "u2": "bye"}
        assert meta["u1"] == {"speaker": "s1", "intelligibility": "VL"}

    def test_duplicate_utt_rejected(self, tmp_path):
        path = tmp_path / "dup.tsv"
        path.write_text("utt_id\ttext\nu1\ta\nu1\tb\n")
        with pytest.raises(ValueError, match="duplicate"):
            read_transcripts_tsv(path)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("id\ttext\nu1\ta\n")
        with pytest.raises(ValueError, match="header"):
            read_transcripts_tsv(path)


class TestMdl1:
    def test_round_trip(self, tmp_path):
        rng = make_rng(2)
        named = [("w", rng.normal(size=(3, 4))), ("b", rng.normal(size=4)),
                 ("scalar", np.array(2.5))]
        path = tmp_path / "m.mdl1"
        write_mdl1(path, "ssl", {"config": {"d": 4}}, 123, named)
        header, arrays = read_mdl1(path)
        assert header["kind"] == "ssl" and header["seed"] == 123
        for name, a in named:
            np.testing.assert_array_equal(arrays[name], a)

    def test_deterministic_bytes(self, tmp_path):
        named = [("w", np.arange(6.0).reshape(2, 3))]
        p1, p2 = tmp_path / "a.mdl1", tmp_path / "b.mdl1"
        write_mdl1(p1, "ssl", {"x": 1, "a": 2}, 0, named)
        write_mdl1(p2, "ssl", {"a": 2, "x": 1}, 0, named)
        assert p1.read_bytes() == p2.read_bytes()


class TestAtomicWrite:
    def test_no_partial_file_on_error(self, tmp_path):
        target = tmp_path / "out.bin"
        with pytest.raises(RuntimeError):
            with atomic_write(target) as fh:
                fh.write(b"partial")
                raise RuntimeError("boom")
        assert not target.exists()
        assert list(tmp_path.iterdir()) == []

    def test_overwrites_existing(self, tmp_path):
        target = tmp_path / "out.txt"
        target.write_text("old")
        with atomic_write(target, "w") as fh:
            fh.write("new")
        assert target.read_text() == "new"


class TestModelCheckpoints:
    def test_ssl_checkpoint_round_trip(self, tmp_path):
        cfg = SslConfig(objective="hubert", d_in=4, n_blocks=2, d_model=8, n_heads=2,
                        d_ff=16, num_codebooks=1, entries=3, code_dim=4)
        model = build_ssl_model(cfg, seed=5)
        from asrfuse.ssl_objectives.quantizers import KMeansQuantizer

        model.pseudo_labeler = KMeansQuantizer.fit(
            make_rng(0).normal(size=(20, 4)), [3], seed=1
        )
        path = tmp_path / "hubert.mdl1"
        save_ssl_checkpoint(path, model, seed=5, epochs_completed=0)
        loaded, header, opt_state = load_ssl_checkpoint(path)
        assert header["hyperparameters"]["epochs_completed"] == 0
        assert opt_state == {}
        for (n1, p1), (n2, p2) in zip(model.named_parameters(),
                                      loaded.named_parameters()):
            assert n1 == n2
            np.testing.assert_array_equal(p1.data, p2.data)
        np.testing.assert_array_equal(loaded.pseudo_labeler.codebooks[0],
                                      model.pseudo_labeler.codebooks[0])

    def test_data2vec_teacher_persisted(self, tmp_path):
        cfg = SslConfig(objective="data2vec", d_in=3, n_blocks=2, d_model=8,
                        n_heads=2, d_ff=16, top_k=1)
        model = build_ssl_model(cfg, seed=6)
        model.teacher.params[0][...] = 42.0
        path = tmp_path / "d2v.mdl1"
        save_ssl_checkpoint(path, model, seed=6, epochs_completed=3)
        loaded, _, _ = load_ssl_checkpoint(path)
        np.testing.assert_array_equal(loaded.teacher.params[0],
                                      model.teacher.params[0])

    def test_mdn_checkpoint_round_trip(self, tmp_path):
        head = MdnHead(4, 2, mixtures=3, hidden=8, rng=derive_rng(7, 0))
        path = tmp_path / "mdn.mdl1"
        save_mdn_checkpoint(path, head, seed=7, epochs_completed=2)
        loaded, header, _ = load_mdn_checkpoint(path)
        assert loaded.mixtures == 3
        frames = make_rng(1).normal(size=(5, 4))
        np.testing.assert_array_equal(loaded.forward(frames).means.data,
                                      head.forward(frames).means.data)

    def test_wrong_kind_rejected(self, tmp_path):
        head = MdnHead(2, 1, mixtures=1, hidden=4, rng=derive_rng(8, 0))
        path = tmp_path / "mdn.mdl1"
        save_mdn_checkpoint(path, head, seed=8, epochs_completed=0)
        with pytest.raises(ValueError, match="not an SSL model"):
            load_ssl_checkpoint(path)
