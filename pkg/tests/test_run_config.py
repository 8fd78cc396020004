import pytest
import yaml
from pydantic import ValidationError

from src.backbones import Architecture
from src.run_config import RunConfig, dump_run_config, load_run_config


def _write(path, data):
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


def test_defaults():
    config = RunConfig()
    assert config.seed == 42
    assert [s.arch for s in config.backbone_specs()] == [Architecture.RESIDUAL18, Architecture.PLAINCONV16]
    assert [s.stage_count for s in config.backbone_specs()] == [4, 5]


def test_relative_paths_resolve_against_config_dir(tmp_path):
    (tmp_path / "cfg").mkdir()
    path = _write(tmp_path / "cfg" / "run.yaml", {"dataset_root": "../data", "output_dir": "out"})
    config = load_run_config(path)
    assert config.dataset_root == (tmp_path / "data").resolve()
    assert config.output_dir == (tmp_path / "cfg" / "out").resolve()


def test_overrides_win_and_none_is_ignored(tmp_path):
    path = _write(tmp_path / "run.yaml", {"seed": 7, "epochs": 3})
    config = load_run_config(path, {"seed": 11, "epochs": None})
    assert (config.seed, config.epochs) == (11, 3)


def test_nested_values_rejected(tmp_path):
    path = _write(tmp_path / "run.yaml", {"trainer": {"epochs": 3}})
    with pytest.raises(ValueError, match="must be flat"):
        load_run_config(path)


def test_unknown_key_rejected(tmp_path):
    path = _write(tmp_path / "run.yaml", {"epoch": 3})
    with pytest.raises(ValidationError):
        load_run_config(path)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_run_config(tmp_path / "absent.yaml")


@pytest.mark.parametrize(
    "field, value",
    [("backbones", "resnet50"), ("backbones", " , "), ("lambda_attn", -1.0), ("sigma", 0.0),
     ("val_fraction", 1.0), ("logging_level", "LOUD"), ("suppression_method", "soft")],
)
def test_invalid_values(field, value):
    with pytest.raises(ValidationError):
        RunConfig(**{field: value})


def test_tiny_ignores_stage_count():
    config = RunConfig(backbones="tiny_test, residual18_style", stage_count=5)
    tiny, residual = config.backbone_specs()
    assert (tiny.stage_count, residual.stage_count) == (3, 5)
    assert config.backbones == "tiny_test,residual18_style"


def test_derived_configs():
    config = RunConfig(lambda_attn=0.0, epochs=2, suppression_method="linear", overlap_threshold=0.4)
    train = config.train_config()
    assert train.loss_weights.lambda_attn == 0.0 and train.epochs == 2
    assert len(train.backbones) == 2
    suppression = config.suppression_config()
    assert (suppression.method, suppression.overlap_threshold) == ("linear", 0.4)


def test_logging_level_uppercased():
    assert RunConfig(logging_level="debug").logging_level == "DEBUG"


def test_validate_paths(tmp_path):
    with pytest.raises(ValueError, match="dataset_root"):
        RunConfig().validate_paths()
    with pytest.raises(FileNotFoundError):
        RunConfig(dataset_root=tmp_path / "missing").validate_paths()
    with pytest.raises(FileNotFoundError, match="Layout"):
        RunConfig(dataset_root=tmp_path, layout_path=tmp_path / "layout.yaml").validate_paths()
    RunConfig(dataset_root=tmp_path).validate_paths()


def test_dump_reloads_identically(tmp_path):
    path = _write(tmp_path / "run.yaml", {"dataset_root": "data", "seed": 3})
    config = load_run_config(path)
    dumped = dump_run_config(config, tmp_path / "out" / "resolved.yaml")
    assert "layout_path" not in yaml.safe_load(dumped.read_text(encoding="utf-8"))
    assert load_run_config(dumped) == config
