import numpy as np
import pytest

from contentgen.corpus import EOS_ID, PAD_ID, SOS_ID, ContextWindow, Dialog, Vocabulary, to_context_windows
from contentgen.lexicon import content_pool
from contentgen.models import Architecture, Example, HierarchicalModel, ModelConfig, make_batch
from contentgen.neural import no_grad
from contentgen.neural.tensor import Tensor
from contentgen import pipeline as P

SMALL = dict(emb_size=8, enc_hidden=6, dec_hidden=5)


@pytest.fixture(scope="module")
def toy(toy_windows, lex, toy_vocab):
    return P.build_training_triplets(toy_windows, lex, toy_vocab)


def tiny(vocab, arch="hed-ced", seed=0, **kw):
    return HierarchicalModel(ModelConfig(len(vocab), arch, **{**SMALL, **kw}), seed=seed)


class TestTriplets:
    def test_walk_example(self, lex):
        vocab = Vocabulary("i will take the dog for a walk . hi".split())
        w = ContextWindow([["hi"]], "i will take the dog for a walk .".split())
        (t,) = P.build_training_triplets([w], lex, vocab)
        assert vocab.decode(t.content) == ["i", "take", "dog", "walk", "."]
        assert vocab.decode(t.response) == w.response
        assert t.context == [vocab.encode(["hi"])]

    def test_all_function_response(self, lex):
        vocab = Vocabulary(["of", "the", "x"])
        (t,) = P.build_training_triplets([ContextWindow([["x"]], ["of", "the"])], lex, vocab)
        assert t.content == []
        assert make_batch([t]).content_ids[0].tolist() == [EOS_ID]

    def test_one_triplet_per_window(self, lex, toy_vocab):
        d = Dialog(sentences=[["hi", "."], ["hello", "."]])
        assert len(P.build_training_triplets(to_context_windows(d), lex, toy_vocab)) == 1

    def test_acts_shifted_to_zero_based(self, lex, toy_vocab):
        (t,) = P.build_training_triplets([ContextWindow([["hi"]], ["ok"], act=4)], lex, toy_vocab)
        assert t.act == 3

    def test_cache_round_trip(self, tmp_path, toy):
        p = tmp_path / "triplets.txt"
        P.write_triplets(toy, p)
        first = p.read_text().splitlines()[0].split("\t")
        assert len(first) == 3 and first[0].split()[-1] == str(EOS_ID)
        again = P.read_triplets(p)
        assert [(t.context, t.content, t.response) for t in again] == [(t.context, t.content, t.response) for t in toy]


class TestTraining:
    def _run(self, toy, vocab, lex, epochs=2, seed=3, **kw):
        m = tiny(vocab, seed=seed)
        rng = np.random.default_rng(seed)
        pool = content_pool(vocab, lex)
        return m, [P.train_epoch(m, toy, rng, insert_pool=pool, epoch=e, **kw) for e in range(epochs)]

    def test_deterministic(self, toy, toy_vocab, lex):
        m1, r1 = self._run(toy, toy_vocab, lex)
        m2, r2 = self._run(toy, toy_vocab, lex)
        assert r1 == r2
        for name in m1.params.names():
            assert np.array_equal(m1.params[name].data, m2.params[name].data)

    def test_loss_goes_down(self, toy, toy_vocab, lex):
        _, reports = self._run(toy, toy_vocab, lex, lr=0.003)
        assert reports[1].total_loss < reports[0].total_loss
        assert reports[0].batches == 2
        r = reports[0]
        assert r.total_loss == pytest.approx(r.content_loss + r.sentence_loss, rel=1e-5)

    def test_big_batch_single_step(self, toy, toy_vocab, lex):
        _, (r,) = self._run(toy, toy_vocab, lex, epochs=1, batch_size=500)
        assert r.batches == 1

    def test_log_line(self):
        r = P.EpochReport(3, 1.5, 2.25, 3.75)
        assert r.log_line() == "3\t1.500000\t2.250000\t3.750000"

    def test_non_finite_loss(self, toy, toy_vocab, lex):
        m = tiny(toy_vocab)
        m.params["embedding"].data[:] = np.inf
        with pytest.raises(P.TrainingError, match="non-finite"), np.errstate(all="ignore"):
            P.train_epoch(m, toy, np.random.default_rng(0), insert_pool=[5])

    def test_needs_pool_for_noise(self, toy, toy_vocab):
        with pytest.raises(P.TrainingError):
            P.train_epoch(tiny(toy_vocab), toy, np.random.default_rng(0), insert_pool=[])

    def test_perplexity_untrained_near_vocab_size(self, toy, toy_vocab):
        m = tiny(toy_vocab, emb_init_scale=0.0)
        ppl = P.perplexity(m, toy)
        assert 0.5 * len(toy_vocab) < ppl < 1.5 * len(toy_vocab)


class TestDecoding:
    def test_forced_eos(self, toy_vocab):
        m = tiny(toy_vocab, "hed")
        m.params["sent_dec.out_bias"].data[EOS_ID] = 100.0
        h0 = Tensor(np.zeros((1, 5), dtype=np.float32))
        tokens, states, _ = P.decode_greedy(m.sent_dec, h0, max_len=40)
        assert tokens == [] and len(states) == 1

    def test_max_len(self, toy_vocab):
        m = tiny(toy_vocab, "hed-noattn")
        m.params["sent_dec.out_bias"].data[EOS_ID] = -100.0
        tokens, _, _ = P.decode_greedy(m.sent_dec, Tensor(np.zeros((1, 5), dtype=np.float32)), max_len=7)
        assert len(tokens) == 7
        with pytest.raises(ValueError):
            P.decode_greedy(m.sent_dec, Tensor(np.zeros((1, 5), dtype=np.float32)), max_len=0)

    def test_never_emits_pad_or_sos(self, toy_vocab):
        m = tiny(toy_vocab, "hed-noattn")
        m.params["sent_dec.out_bias"].data[[PAD_ID, SOS_ID]] = 100.0
        tokens, _, first = P.decode_greedy(m.sent_dec, Tensor(np.zeros((1, 5), dtype=np.float32)), max_len=5)
        assert PAD_ID not in tokens and SOS_ID not in tokens
        assert np.isneginf(first[PAD_ID]) and np.isneginf(first[SOS_ID])

    def test_three_step_oracle(self, toy_vocab):
        m = tiny(toy_vocab, "hed-noattn", seed=5)
        dec = m.sent_dec
        h0 = Tensor(np.random.default_rng(1).uniform(-1, 1, size=(1, 5)).astype(np.float32))
        tokens, _, _ = P.decode_greedy(dec, h0, max_len=3)
        E = dec.embedding.data.astype(np.float64)
        W, U, b = (p.data.astype(np.float64) for p in (dec.gru.W, dec.gru.U, dec.gru.b))
        proj, bias = dec.proj.data.astype(np.float64), dec.bias.data.astype(np.float64)
        sig = lambda x: 1 / (1 + np.exp(-x))
        h, tok, expect = h0.data[0].astype(np.float64), SOS_ID, []
        for _ in range(3):
            x = E[tok]
            z = sig(x @ W[:, :5] + h @ U[:, :5] + b[:5])
            r = sig(x @ W[:, 5:10] + h @ U[:, 5:10] + b[5:10])
            n = np.tanh(x @ W[:, 10:] + (r * h) @ U[:, 10:] + b[10:])
            h = (1 - z) * h + z * n
            logits = (h @ proj) @ E.T + bias
            logits[[PAD_ID, SOS_ID]] = -np.inf
            tok = int(np.argmax(logits))
            if tok == EOS_ID:
                break
            expect.append(tok)
        assert tokens == expect

    def test_beam_width_one_is_greedy(self, toy, toy_vocab):
        m = tiny(toy_vocab, "hed", seed=2)
        with no_grad():
            enc = m.encode_context(make_batch([toy[0]]))
            h0 = m.sent_bridge(enc.dial_final)
        greedy, _, _ = P.decode_greedy(m.sent_dec, h0, enc.sent_states, enc.key_mask, max_len=10)
        beam, _, _ = P.decode_beam(m.sent_dec, h0, enc.sent_states, enc.key_mask, max_len=10, width=1)
        assert greedy == beam

    @pytest.mark.parametrize("arch", list(Architecture))
    def test_generate(self, arch, toy, toy_vocab):
        m = tiny(toy_vocab, arch, seed=1, da_head=True)
        g1 = P.generate(m, toy[0].context)
        g2 = P.generate(m, toy[0].context)
        assert (g1.content, g1.response, g1.act) == (g2.content, g2.response, g2.act)
        assert g1.act in range(4)
        if not arch.has_content:
            assert g1.content == []
        for seq in (g1.content, g1.response):
            assert not {PAD_ID, SOS_ID, EOS_ID} & set(seq)
        assert len(g1.content) <= 20 and len(g1.response) <= 40

    def test_beam_generate(self, toy, toy_vocab):
        g = P.generate(tiny(toy_vocab, "hed-cd"), toy[0].context, beam=3)
        assert EOS_ID not in g.response

    def test_empty_content_still_answers(self, toy, toy_vocab):
        m = tiny(toy_vocab, "hed-ced", seed=1)
        m.params["sent_dec.out_bias"].data[EOS_ID] = -100.0
        g = P.generate(m, toy[0].context, content_override=[])
        assert g.content == [] and len(g.response) > 0

    @pytest.mark.parametrize("arch", ["hed-cd", "hed-ced"])
    def test_content_changes_first_step(self, arch, toy, toy_vocab):
        m = tiny(toy_vocab, arch, seed=1)
        a = P.generate(m, toy[0].context, content_override=[10, 11, 12])
        b = P.generate(m, toy[0].context, content_override=[10, 13, 12])
        assert not np.allclose(a.first_logits, b.first_logits)


class TestCheckpoint:
    def _model(self, vocab):
        return tiny(vocab, "hed-ced", seed=4, da_head=True)

    def test_round_trip(self, tmp_path, toy_vocab):
        m = self._model(toy_vocab)
        P.save_checkpoint(m, tmp_path / "ck", toy_vocab, epoch=3, metrics={"loss": "1.5"})
        loaded, manifest = P.load_checkpoint(tmp_path / "ck", toy_vocab)
        assert loaded.config == m.config
        assert manifest["epoch"] == "3" and manifest["metric.loss"] == "1.5"
        assert manifest["vocab_hash"] == toy_vocab.hash()
        for name in m.params.names():
            assert m.params[name].data.tobytes() == loaded.params[name].data.tobytes()

    def test_byte_identical(self, tmp_path, toy_vocab):
        for d in ("a", "b"):
            P.save_checkpoint(self._model(toy_vocab), tmp_path / d, toy_vocab, epoch=1)
        for f in ("manifest.txt", "params.bin"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_truncated(self, tmp_path, toy_vocab):
        P.save_checkpoint(self._model(toy_vocab), tmp_path / "ck", toy_vocab)
        blob = tmp_path / "ck" / "params.bin"
        blob.write_bytes(blob.read_bytes()[:-10])
        with pytest.raises(P.CheckpointError, match="sent_enc.fwd.b"):
            P.load_checkpoint(tmp_path / "ck", toy_vocab)

    def test_corrupt_header(self, tmp_path, toy_vocab):
        P.save_checkpoint(self._model(toy_vocab), tmp_path / "ck", toy_vocab)
        blob = tmp_path / "ck" / "params.bin"
        blob.write_bytes(b"garbage" + blob.read_bytes())
        with pytest.raises(P.CheckpointError, match="corrupt header"):
            P.load_checkpoint(tmp_path / "ck", toy_vocab)

    def test_shape_mismatch(self, tmp_path, toy_vocab):
        P.save_checkpoint(self._model(toy_vocab), tmp_path / "ck", toy_vocab)
        manifest = tmp_path / "ck" / "manifest.txt"
        manifest.write_text(manifest.read_text().replace("config.dec_hidden: 5", "config.dec_hidden: 6"))
        with pytest.raises(P.CheckpointError, match="shape mismatch"):
            P.load_checkpoint(tmp_path / "ck", toy_vocab)

    def test_vocab_mismatch(self, tmp_path, toy_vocab):
        P.save_checkpoint(self._model(toy_vocab), tmp_path / "ck", toy_vocab)
        other = Vocabulary(toy_vocab.words()[::-1])
        with pytest.raises(P.CheckpointError, match=toy_vocab.hash()[:12]):
            P.load_checkpoint(tmp_path / "ck", other)
