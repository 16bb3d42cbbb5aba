import numpy as np
import pytest

from anchor_exporter import LayerRangeError, WordEncodingError, encode_words

from conftest import V1_KEYWORDS


class TestEncodeWords:
    def test_shapes_and_source(self, tiny_model_dir):
        anchors, dim, source = encode_words(["yes", "no"], tiny_model_dir, layer=1)
        assert dim == 16
        assert set(anchors) == {"yes", "no"}
        for vec in anchors.values():
            assert vec.shape == (16,)
            assert vec.dtype == np.float64
            assert np.all(np.isfinite(vec))
        assert source.endswith("/layer1")

    def test_all_keywords_encode(self, tiny_model_dir):
        anchors, dim, _ = encode_words(V1_KEYWORDS, tiny_model_dir, layer=2)
        assert len(anchors) == 10 and dim == 16

    def test_repeat_runs_are_bit_identical(self, tiny_model_dir):
        a, _, _ = encode_words(["yes", "playing"], tiny_model_dir, layer=1)
        b, _, _ = encode_words(["yes", "playing"], tiny_model_dir, layer=1)
        for word in a:
            assert np.array_equal(a[word], b[word]), word

    def test_batching_does_not_change_vectors(self, tiny_model_dir):
        whole, _, _ = encode_words(V1_KEYWORDS, tiny_model_dir, layer=1, batch_size=64)
        chunked, _, _ = encode_words(V1_KEYWORDS, tiny_model_dir, layer=1, batch_size=3)
        for word in V1_KEYWORDS:
            np.testing.assert_allclose(chunked[word], whole[word], rtol=0, atol=1e-6)

    def test_layers_differ(self, tiny_model_dir):
        low, _, _ = encode_words(["yes"], tiny_model_dir, layer=1)
        high, _, _ = encode_words(["yes"], tiny_model_dir, layer=2)
        a, b = low["yes"], high["yes"]
        cosine = float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
        assert cosine < 1.0

    def test_multi_piece_word_pools_subwords(self, tiny_model_dir):
        # "playing" splits into play + ##ing; the anchor must not equal
        # either piece encoded alone, but must still be one dim-16 vector
        anchors, _, _ = encode_words(["playing", "play"], tiny_model_dir, layer=1)
        assert anchors["playing"].shape == (16,)
        assert not np.allclose(anchors["playing"], anchors["play"])

    def test_unknown_word_still_encodes(self, tiny_model_dir):
        # out-of-vocabulary words fall back to the unknown token: usable
        anchors, _, _ = encode_words(["zzz"], tiny_model_dir, layer=1)
        assert np.all(np.isfinite(anchors["zzz"]))

    def test_word_with_no_usable_tokens_rejected(self, tiny_model_dir):
        # a bare combining accent is stripped by the tokenizer, leaving
        # only the sequence delimiters
        with pytest.raises(WordEncodingError, match="no usable tokens"):
            encode_words(["yes", "́"], tiny_model_dir, layer=1)

    @pytest.mark.parametrize("layer", [-1, 3, 99])
    def test_layer_out_of_range(self, tiny_model_dir, layer):
        with pytest.raises(LayerRangeError, match="0..2"):
            encode_words(["yes"], tiny_model_dir, layer=layer)

    def test_layer_zero_is_the_embedding_output(self, tiny_model_dir):
        anchors, _, _ = encode_words(["yes"], tiny_model_dir, layer=0)
        assert anchors["yes"].shape == (16,)
