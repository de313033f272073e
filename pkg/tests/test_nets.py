import pytest
import torch

from emotiongan.errors import CheckpointError, DataError, ExtractorUnavailableError, ScorerMissingError
from emotiongan.nets import (
    ExpressionClassifier, FlowGenerator, ImageGenerator, NetSpec, PatchDiscriminator, bound_flow, build_extractor,
    build_scorer, count_parameters, load_checkpoint, random_extractor, save_checkpoint,
)

TOY = NetSpec().scaled(4)


def test_parameter_counts_full_scale():
    spec = NetSpec()
    assert count_parameters(FlowGenerator(spec.flow_generator)) == 37_361_570
    assert count_parameters(PatchDiscriminator(spec.patch_discriminator)) == 2_762_177
    assert count_parameters(ExpressionClassifier(spec.expression_discriminator)) == 4_288_743
    assert count_parameters(ImageGenerator(spec.image_generator)) == 12_458_115
    assert count_parameters(ExpressionClassifier(spec.expression_scorer, in_channels=3)) == 4_289_031


def test_parameter_counts_toy_scale():
    assert count_parameters(FlowGenerator(TOY.flow_generator)) == 2_337_386
    assert count_parameters(PatchDiscriminator(TOY.patch_discriminator)) == 174_449
    assert count_parameters(ExpressionClassifier(TOY.expression_discriminator)) == 268_479
    assert count_parameters(ImageGenerator(TOY.image_generator)) == 780_963


def test_flow_generator_shape_and_bounds():
    torch.manual_seed(0)
    g = FlowGenerator(TOY.flow_generator)
    for x in (torch.zeros(2, 2, 128, 128), torch.rand(2, 2, 128, 128) * 2 - 1):
        y = g(x)
        assert y.shape == (2, 2, 128, 128)
        assert torch.isfinite(y).all()
        assert y[:, 0].min() >= 0 and y[:, 0].max() <= 1
        assert y[:, 1].min() >= -1 and y[:, 1].max() <= 1


def test_bound_flow_extremes():
    y = bound_flow(torch.tensor([[-1e4, 1e4]]).view(1, 2, 1, 1))
    assert y[0, 0].item() == 0.0 and y[0, 1].item() == 1.0


def test_patch_discriminator_grid():
    d = PatchDiscriminator(TOY.patch_discriminator)
    out = d(torch.rand(3, 2, 128, 128), torch.rand(3, 2, 128, 128))
    assert out.shape == (3, 1, 8, 8)


def test_classifier_softmax_sums_to_one():
    for cin in (2, 3):
        c = ExpressionClassifier(TOY.expression_discriminator, in_channels=cin).eval()
        p = torch.softmax(c(torch.rand(4, cin, 128, 128)).double(), dim=1)
        assert p.shape == (4, 7)
        assert torch.allclose(p.sum(1), torch.ones(4, dtype=torch.float64), atol=1e-6)


def test_image_generator_range():
    g = ImageGenerator(TOY.image_generator)
    y = g(torch.rand(2, 3, 128, 128), torch.rand(2, 2, 128, 128))
    assert y.shape == (2, 3, 128, 128)
    assert y.min() >= 0 and y.max() <= 1


def test_wrong_input_shape_rejected():
    g = FlowGenerator(TOY.flow_generator)
    with pytest.raises(DataError):
        g(torch.zeros(1, 2, 64, 64))
    with pytest.raises(DataError):
        g(torch.zeros(1, 3, 128, 128))
    with pytest.raises(DataError):
        ImageGenerator(TOY.image_generator)(torch.zeros(1, 1, 128, 128), torch.zeros(1, 2, 128, 128))


def test_netspec_dict_roundtrip():
    assert NetSpec.from_dict(TOY.to_dict()) == TOY
    assert TOY.flow_generator.widths == (16, 32, 64, 128)


def test_scorer_backends(tmp_path):
    assert isinstance(build_scorer("builtin", TOY.expression_scorer), ExpressionClassifier)
    with pytest.raises(ScorerMissingError, match="scorer missing"):
        build_scorer("torchscript", path=str(tmp_path / "none.pt"))
    with pytest.raises(ScorerMissingError):
        build_scorer("onnx")
    scripted = torch.jit.trace(ExpressionClassifier(TOY.expression_scorer, in_channels=3).eval(),
                               torch.rand(1, 3, 128, 128))
    scripted.save(str(tmp_path / "s.pt"))
    s = build_scorer("torchscript", path=str(tmp_path / "s.pt"))
    assert s(torch.rand(1, 3, 128, 128)).shape == (1, 7)
    with pytest.raises(DataError):
        s(torch.rand(1, 2, 128, 128))


def test_extractor_backends():
    with pytest.raises(ExtractorUnavailableError):
        build_extractor("vgg16", weights_path=None)
    with pytest.raises(ExtractorUnavailableError):
        build_extractor("vgg16", weights_path="/nonexistent/vgg16.pth")
    with pytest.raises(ExtractorUnavailableError):
        build_extractor("alexnet")
    feats = build_extractor("random")(torch.rand(1, 3, 32, 32))
    assert len(feats) == 3


def test_random_extractor_is_seeded():
    a, b = random_extractor(seed=3), random_extractor(seed=3)
    x = torch.rand(1, 3, 16, 16)
    assert all(torch.equal(u, v) for u, v in zip(a(x), b(x)))


def test_checkpoint_roundtrip_and_checks(tmp_path):
    torch.manual_seed(0)
    g = FlowGenerator(TOY.flow_generator)
    opt = torch.optim.Adam(g.parameters(), lr=1e-3)
    g(torch.rand(1, 2, 128, 128)).sum().backward()
    opt.step()
    path = save_checkpoint(tmp_path / "c.pt", netspec=TOY, models={"flow_generator": g},
                           optimizers={"flow_generator": opt}, epoch=3, config_hash="abc")
    payload = load_checkpoint(path, expected_hash="abc", expected_spec=TOY)
    assert payload["epoch"] == 3 and payload["netspec"] == TOY
    h = FlowGenerator(TOY.flow_generator)
    h.load_state_dict(payload["models"]["flow_generator"])
    assert all(torch.equal(p, q) for p, q in zip(g.state_dict().values(), h.state_dict().values()))
    with pytest.raises(CheckpointError):
        load_checkpoint(path, expected_hash="other")
    with pytest.raises(CheckpointError):
        load_checkpoint(path, expected_spec=NetSpec())
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.pt")
    (tmp_path / "junk.pt").write_bytes(b"junk")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "junk.pt")
