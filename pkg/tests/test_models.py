from __future__ import annotations

import numpy as np
import pytest
import torch

from hatedetect.models import (
    GRID_DROPOUTS,
    GRID_EMBEDDING_DIMS,
    GRID_HIDDEN_DIMS,
    HyperParams,
    ModelFamily,
    ModelSpec,
    RecurrentClassifier,
    build_model,
    param_count,
)
from hatedetect.validation import ValidationError
from hatedetect.vocab import EmbeddingMatrix


def char_spec(embedding_dim=200, hidden_dim=16, dropout=0.5, vocab_size=40, num_classes=1, **kw):
    hp = HyperParams(
        family=ModelFamily.CHAR_LSTM,
        embedding_dim=embedding_dim,
        hidden_dim=hidden_dim,
        dropout=dropout,
        num_classes=num_classes,
        **kw,
    )
    return ModelSpec(hyperparams=hp, vocab_size=vocab_size)


def gru_spec(input_width=768, hidden_dim=256, dropout=0.25, num_classes=1):
    hp = HyperParams(
        family=ModelFamily.BERT_FEATURE_GRU,
        hidden_dim=hidden_dim,
        dropout=dropout,
        encoder_variant="base",
        num_classes=num_classes,
    )
    return ModelSpec(hyperparams=hp, input_width=input_width)


class TestParamCount:
    def test_lstm_closed_form(self):
        # V*E + 4*((E+H)*H + H) + (H*C + C) with V=40, E=200, H=16, C=1
        assert param_count(char_spec()) == 21_905

    def test_gru_closed_form(self):
        # 3*((W+H)*H + H) + (H*C + C) with W=768, H=256, C=1
        assert param_count(gru_spec()) == 787_457

    def test_zero_hidden_rejected(self):
        with pytest.raises(ValidationError):
            char_spec(hidden_dim=0)

    def test_finetune_not_covered(self):
        hp = HyperParams(family=ModelFamily.BERT_FINETUNE, hidden_dim=1, dropout=0.0)
        with pytest.raises(ValidationError):
            param_count(ModelSpec(hyperparams=hp))

    @pytest.mark.parametrize("family", [ModelFamily.CHAR_LSTM, ModelFamily.WORD_LSTM])
    def test_constructed_matches_closed_form_on_full_grids(self, family):
        vocab_size = 40
        for e in GRID_EMBEDDING_DIMS[family]:
            for h in GRID_HIDDEN_DIMS[family]:
                for p in GRID_DROPOUTS:
                    hp = HyperParams(family=family, embedding_dim=e, hidden_dim=h, dropout=p)
                    spec = ModelSpec(hyperparams=hp, vocab_size=vocab_size)
                    model = build_model(spec, seed=0)
                    built = sum(t.numel() for t in model.parameters() if t.requires_grad)
                    assert built == param_count(spec), (e, h, p)

    def test_constructed_matches_closed_form_feature_gru(self):
        for width in (768, 1024):
            for h in GRID_HIDDEN_DIMS[ModelFamily.BERT_FEATURE_GRU]:
                spec = gru_spec(input_width=width, hidden_dim=h)
                model = build_model(spec, seed=0)
                built = sum(t.numel() for t in model.parameters() if t.requires_grad)
                assert built == param_count(spec), (width, h)

    def test_extra_layers_add_hidden_square_terms(self):
        one = param_count(char_spec(num_layers=1))
        two = param_count(char_spec(num_layers=2))
        h = 16
        assert two - one == 4 * ((h + h) * h + h)
        built = sum(
            t.numel() for t in build_model(char_spec(num_layers=2), seed=0).parameters()
        )
        assert built == two


class TestBuildModel:
    def test_same_seed_identical_weights(self):
        a = build_model(char_spec(), seed=5)
        b = build_model(char_spec(), seed=5)
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert torch.equal(pa, pb)

    def test_different_seed_differs(self):
        a = build_model(char_spec(), seed=5)
        b = build_model(char_spec(), seed=6)
        assert any(not torch.equal(pa, pb) for pa, pb in zip(a.parameters(), b.parameters()))

    def test_pretrained_rows_copied_exactly(self):
        hp = HyperParams(
            family=ModelFamily.WORD_LSTM,
            embedding_dim=3,
            hidden_dim=4,
            dropout=0.25,
            pretrained_embeddings=True,
        )
        spec = ModelSpec(hyperparams=hp, vocab_size=5)
        rows = np.arange(15, dtype=np.float32).reshape(5, 3)
        rows[0] = 0.0
        emb = EmbeddingMatrix(rows=rows, source="pretrained")
        model = build_model(spec, emb=emb, seed=0)
        np.testing.assert_array_equal(model.embedding.weight.detach().numpy(), rows)

    def test_embedding_shape_mismatch_rejected(self):
        hp = HyperParams(
            family=ModelFamily.WORD_LSTM,
            embedding_dim=3,
            hidden_dim=4,
            dropout=0.25,
            pretrained_embeddings=True,
        )
        spec = ModelSpec(hyperparams=hp, vocab_size=5)
        bad = EmbeddingMatrix(rows=np.zeros((4, 3), dtype=np.float32), source="pretrained")
        with pytest.raises(ValidationError, match="shape"):
            build_model(spec, emb=bad, seed=0)

    def test_embeddings_required_iff_flagged(self):
        with pytest.raises(ValidationError):
            build_model(
                ModelSpec(
                    hyperparams=HyperParams(
                        family=ModelFamily.WORD_LSTM,
                        embedding_dim=3,
                        hidden_dim=4,
                        dropout=0.25,
                        pretrained_embeddings=True,
                    ),
                    vocab_size=5,
                ),
                seed=0,
            )
        with pytest.raises(ValidationError):
            build_model(
                char_spec(),
                emb=EmbeddingMatrix(rows=np.zeros((40, 200), dtype=np.float32), source="random"),
                seed=0,
            )

    def test_grid_constrained_rejects_off_grid(self):
        off_grid = char_spec(hidden_dim=256)
        with pytest.raises(ValidationError, match="off the"):
            build_model(off_grid, seed=0, grid_constrained=True)
        # the unconstrained default accepts it (reported results include one such row)
        model = build_model(off_grid, seed=0)
        assert isinstance(model, RecurrentClassifier)


class TestForward:
    @pytest.fixture
    def model(self):
        return build_model(char_spec(vocab_size=12, embedding_dim=8, hidden_dim=6), seed=0).eval()

    def _batch(self, n, t, vocab=12, seed=0):
        g = torch.Generator().manual_seed(seed)
        ids = torch.randint(2, vocab, (n, t), generator=g)
        lengths = torch.randint(1, t + 1, (n,), generator=g)
        for i in range(n):
            ids[i, lengths[i] :] = 0
        return ids, lengths

    def test_logit_shape_batch_32(self, model):
        ids, lengths = self._batch(32, 10)
        assert model(ids, lengths).shape == (32, 1)

    def test_multiclass_shape(self):
        model = build_model(char_spec(num_classes=4), seed=0).eval()
        ids, lengths = self._batch(8, 5, vocab=40)
        assert model(ids, lengths).shape == (8, 4)

    def test_eval_determinism(self, model):
        ids, lengths = self._batch(4, 7)
        assert torch.equal(model(ids, lengths), model(ids, lengths))

    def test_pad_invariance(self, model):
        ids, lengths = self._batch(6, 5)
        padded = torch.cat([ids, torch.zeros(6, 9, dtype=torch.long)], dim=1)
        diff = (model(ids, lengths) - model(padded, lengths)).abs().max().item()
        assert diff <= 1e-6

    def test_zero_length_defined(self, model):
        ids = torch.zeros(2, 4, dtype=torch.long)
        lengths = torch.zeros(2, dtype=torch.long)
        logits = model(ids, lengths)
        assert torch.isfinite(logits).all()
        # both rows reduce to the zero initial state, so logits agree
        assert torch.equal(logits[0], logits[1])

    def test_out_of_range_id_rejected(self, model):
        ids = torch.full((1, 3), 99, dtype=torch.long)
        with pytest.raises(ValidationError, match="out of range"):
            model(ids, torch.tensor([3]))

    def test_dropout_zero_train_equals_eval(self):
        model = build_model(char_spec(dropout=0.0), seed=0)
        ids, lengths = self._batch(4, 6, vocab=40)
        model.train()
        train_logits = model(ids, lengths)
        model.eval()
        eval_logits = model(ids, lengths)
        assert torch.equal(train_logits, eval_logits)

    def test_feature_gru_pad_invariance(self):
        model = build_model(gru_spec(input_width=5, hidden_dim=4), seed=0).eval()
        g = torch.Generator().manual_seed(3)
        feats = torch.randn(3, 6, 5, generator=g)
        lengths = torch.tensor([2, 4, 6])
        for i in range(3):
            feats[i, lengths[i] :] = 0
        padded = torch.cat([feats, torch.zeros(3, 4, 5)], dim=1)
        diff = (model(feats, lengths) - model(padded, lengths)).abs().max().item()
        assert diff <= 1e-6

    def test_feature_width_mismatch_rejected(self):
        model = build_model(gru_spec(input_width=5, hidden_dim=4), seed=0)
        with pytest.raises(ValidationError, match="width"):
            model(torch.zeros(2, 3, 7), torch.tensor([3, 3]))


def relative_gradient_errors(model, inputs, lengths, targets) -> float:
    """Max relative error between autograd and central finite differences."""
    loss_fn = torch.nn.BCEWithLogitsLoss()

    def compute_loss():
        return loss_fn(model(inputs, lengths).squeeze(-1), targets)

    model.zero_grad()
    compute_loss().backward()
    worst = 0.0
    eps = 1e-5
    for param in model.parameters():
        grad = param.grad
        if grad is None:
            continue
        flat = param.data.view(-1)
        grad_flat = grad.view(-1)
        for i in range(flat.numel()):
            original = flat[i].item()
            flat[i] = original + eps
            with torch.no_grad():
                up = compute_loss().item()
            flat[i] = original - eps
            with torch.no_grad():
                down = compute_loss().item()
            flat[i] = original
            numeric = (up - down) / (2 * eps)
            analytic = grad_flat[i].item()
            scale = max(abs(analytic), abs(numeric), 1e-4)
            worst = max(worst, abs(analytic - numeric) / scale)
    return worst


class TestGradients:
    def test_lstm_analytic_matches_finite_differences(self):
        # embedding gradient for pad stays zero; every other parameter checked
        model = build_model(
            char_spec(vocab_size=10, embedding_dim=4, hidden_dim=3, dropout=0.0), seed=1
        ).double()
        g = torch.Generator().manual_seed(2)
        inputs = torch.randint(2, 10, (4, 5), generator=g)
        lengths = torch.tensor([5, 3, 4, 2])
        targets = torch.tensor([0.0, 1.0, 1.0, 0.0], dtype=torch.float64)
        assert relative_gradient_errors(model, inputs, lengths, targets) < 1e-3

    def test_gru_analytic_matches_finite_differences(self):
        model = build_model(gru_spec(input_width=4, hidden_dim=3, dropout=0.0), seed=1).double()
        g = torch.Generator().manual_seed(4)
        inputs = torch.randn(4, 5, 4, generator=g, dtype=torch.float64)
        lengths = torch.tensor([5, 2, 4, 1])
        targets = torch.tensor([0.0, 1.0, 0.0, 1.0], dtype=torch.float64)
        assert relative_gradient_errors(model, inputs, lengths, targets) < 1e-3


class TestHyperParams:
    def test_grid_validation_lists(self):
        HyperParams(
            family=ModelFamily.CHAR_LSTM, embedding_dim=50, hidden_dim=16, dropout=0.25
        ).validate_grid()
        with pytest.raises(ValidationError):
            HyperParams(
                family=ModelFamily.CHAR_LSTM, embedding_dim=51, hidden_dim=16, dropout=0.25
            ).validate_grid()
        with pytest.raises(ValidationError):
            HyperParams(
                family=ModelFamily.WORD_LSTM, embedding_dim=100, hidden_dim=33, dropout=0.25
            ).validate_grid()
        with pytest.raises(ValidationError):
            HyperParams(
                family=ModelFamily.CHAR_LSTM, embedding_dim=50, hidden_dim=16, dropout=0.3
            ).validate_grid()

    def test_dropout_bounds(self):
        with pytest.raises(ValidationError):
            HyperParams(family=ModelFamily.CHAR_LSTM, embedding_dim=50, hidden_dim=16, dropout=1.5)

    def test_recurrent_needs_embedding_dim(self):
        with pytest.raises(ValidationError):
            HyperParams(family=ModelFamily.CHAR_LSTM, hidden_dim=16, dropout=0.5)

    def test_dict_roundtrip(self):
        hp = HyperParams(
            family=ModelFamily.WORD_LSTM, embedding_dim=300, hidden_dim=256, dropout=0.25
        )
        assert HyperParams.from_dict(hp.to_dict()) == hp

    def test_spec_dict_roundtrip(self):
        spec = gru_spec()
        assert ModelSpec.from_dict(spec.to_dict()) == spec
