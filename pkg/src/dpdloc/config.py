"""Pipeline configuration: flat JSON key/value file with units in key names."""

import dataclasses
import json
from dataclasses import dataclass

PIPELINES = ("md-dpd", "dpd-eds")

# per-pipeline defaults for keys left as None
PIPELINE_DEFAULTS = {
    "md-dpd": {"frames_avg": 3, "freq_min_hz": 400.0, "freq_max_hz": 4000.0,
               "pass_fraction": 0.05, "apply_bias": False},
    "dpd-eds": {"frames_avg": 2, "freq_min_hz": 400.0, "freq_max_hz": 6000.0,
                "pass_fraction": 0.025, "apply_bias": True},
}


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    pipeline: str = "md-dpd"
    sample_rate_hz: float = 16000.0
    window_len: int = 512
    overlap: float = 0.5
    frames_avg: int = None
    bins_avg: int = 15
    focusing_sh_order: int = 4
    pwd_sh_order: int = 3
    freq_min_hz: float = None
    freq_max_hz: float = None
    pass_fraction: float = None
    grid_resolution_deg: float = 2.0
    focusing_grid_resolution_deg: float = 6.0
    pwd_regularization: float = 0.01
    n_sources: int = 1
    apply_bias: bool = None
    bias_az_deg: float = 8.0
    bias_el_deg: float = -5.0
    sound_speed_mps: float = 343.0
    output_frame_rate_hz: float = None
    seed: int = 0

    def resolved(self):
        """Copy with pipeline-specific defaults filled in, validated."""
        if self.pipeline not in PIPELINES:
            raise ConfigError(f"pipeline must be one of {PIPELINES}, got {self.pipeline!r}")
        values = dataclasses.asdict(self)
        for key, default in PIPELINE_DEFAULTS[self.pipeline].items():
            if values[key] is None:
                values[key] = default
        out = PipelineConfig(**values)
        out.validate()
        return out

    def validate(self):
        def check(cond, msg):
            if not cond:
                raise ConfigError(msg)

        check(self.sample_rate_hz > 0, "sample_rate_hz must be positive")
        check(int(self.window_len) == self.window_len and self.window_len >= 2,
              "window_len must be an integer >= 2")
        check(0 <= self.overlap < 1, "overlap must be in [0, 1)")
        check(self.frames_avg is None or self.frames_avg >= 1, "frames_avg must be >= 1")
        check(self.bins_avg >= 1, "bins_avg must be >= 1")
        check(0 <= self.focusing_sh_order <= 10, "focusing_sh_order must be in [0, 10]")
        check(0 <= self.pwd_sh_order <= 4, "pwd_sh_order must be in [0, 4]")
        nyquist = self.sample_rate_hz / 2
        if self.freq_min_hz is not None and self.freq_max_hz is not None:
            check(0 < self.freq_min_hz < self.freq_max_hz <= nyquist,
                  f"need 0 < freq_min_hz < freq_max_hz <= {nyquist:g}")
        check(self.pass_fraction is None or 0 < self.pass_fraction <= 1,
              "pass_fraction must be in (0, 1]")
        check(0.5 <= self.grid_resolution_deg <= 20, "grid_resolution_deg must be in [0.5, 20]")
        check(0.5 <= self.focusing_grid_resolution_deg <= 20,
              "focusing_grid_resolution_deg must be in [0.5, 20]")
        check(self.pwd_regularization >= 0, "pwd_regularization must be >= 0")
        check(int(self.n_sources) == self.n_sources and self.n_sources >= 1,
              "n_sources must be a positive integer")
        check(self.sound_speed_mps > 0, "sound_speed_mps must be positive")
        check(self.output_frame_rate_hz is None or self.output_frame_rate_hz > 0,
              "output_frame_rate_hz must be positive")

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls(**d)
        if cfg.pipeline not in PIPELINES:
            raise ConfigError(f"pipeline must be one of {PIPELINES}, got {cfg.pipeline!r}")
        cfg.validate()
        return cfg

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as f:
                d = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config file must hold a flat JSON object")
        return cls.from_dict(d)
