"""Public parameters of a selection session and their derivation rules."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from .dp import geometric_p

log = logging.getLogger(__name__)

# Target probability that any capped noise draw needs resampling.
NOISE_CAP_SECURITY = 40


class ConfigError(ValueError):
    pass


def auto_noise_cap_bits(epsilon: float, n: int, k: int, d: int) -> int:
    """Bits bounding each server's per-coordinate noise.

    At least 2 + ceil(log2 n), and large enough that a Geometric(p) draw
    exceeds the cap with probability below 2**-40 / (k d); the negative
    binomial shares are lighter-tailed than Geometric(p).
    """
    base = 2 + math.ceil(math.log2(max(n, 1)))
    p = geometric_p(epsilon)
    if p >= 1.0:
        return base
    need = (NOISE_CAP_SECURITY * math.log(2) + math.log(k * d)) / -math.log1p(-p)
    return max(base, math.ceil(math.log2(need + 1)))


@dataclass
class ProtocolConfig:
    """All public parameters; derived values are filled in on construction.

    ``ring_bits`` and ``noise_cap_bits`` of 0 mean derive automatically.
    """

    epsilon: float
    trunc_bits: int
    servers: int
    dims: int
    clients: int
    corrupt: int | None = None
    kappa: int = 40
    ring_bits: int = 0
    noise_cap_bits: int = 0
    preprocessing: str = "auto"
    seed: int = 0
    notes: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.trunc_bits < 0:
            raise ConfigError("trunc_bits must be nonnegative")
        if self.dims < 1:
            raise ConfigError("dims must be at least 1")
        if self.clients < 1:
            raise ConfigError("at least one client is required")
        if self.kappa < 40:
            raise ConfigError("kappa must be at least 40")
        if self.servers < 3 or self.servers % 2 == 0:
            raise ConfigError(f"servers must be odd and at least 3, got {self.servers}")
        t = (self.servers - 1) // 2
        if self.corrupt is None:
            self.corrupt = t
        if self.corrupt != t:
            raise ConfigError(f"servers = 2*corrupt + 1 is required "
                              f"(servers={self.servers}, corrupt={self.corrupt})")
        if self.preprocessing == "auto":
            self.preprocessing = "dealer" if self.servers == 3 else "simulated"
        if self.preprocessing not in ("dealer", "simulated"):
            raise ConfigError(f"unknown preprocessing mode {self.preprocessing!r}")
        if self.preprocessing == "dealer" and self.servers != 3:
            raise ConfigError("a dealer is only sound with exactly three servers")
        if self.noise_cap_bits == 0:
            self.noise_cap_bits = auto_noise_cap_bits(self.epsilon, self.clients,
                                                      self.servers, self.dims)
        required = self.required_ring_bits
        if self.ring_bits == 0:
            self.ring_bits = max(required, self.formula_ring_bits)
        elif self.ring_bits < required:
            raise ConfigError(f"ring_bits={self.ring_bits} is below the {required} bits "
                              f"needed for lossless conversion")
        if self.ring_bits > 64:
            raise ConfigError(f"ring_bits={self.ring_bits} exceeds 64")
        if self.ring_bits != self.literal_ring_bits:
            self.notes.append(
                f"ring width {self.ring_bits} differs from log(n) - c + 1 = "
                f"{self.literal_ring_bits}, which leaves no room for noise or the comparison "
                f"headroom bit")

    # short names used throughout the protocol code
    @property
    def k(self) -> int:
        return self.servers

    @property
    def t(self) -> int:
        return self.corrupt

    @property
    def h(self) -> int:
        return self.servers - self.corrupt

    @property
    def c(self) -> int:
        return self.trunc_bits

    @property
    def d(self) -> int:
        return self.dims

    @property
    def n(self) -> int:
        return self.clients

    @property
    def a(self) -> int:
        return self.ring_bits

    @property
    def p(self) -> float:
        return geometric_p(self.epsilon)

    @property
    def gamma(self) -> int:
        return 1 << self.trunc_bits

    @property
    def delta(self) -> float:
        """Statistical slack 2**-kappa of the sharing-based simulation."""
        return 2.0 ** -self.kappa

    @property
    def noise_cap(self) -> int:
        """Noise draws must be strictly below this value."""
        return 1 << self.noise_cap_bits

    @property
    def offset(self) -> int:
        """Public shift keeping truncated aggregates nonnegative in the ring."""
        return self.h // 2

    @property
    def max_aggregate(self) -> int:
        return self.clients + self.servers * (self.noise_cap - 1)

    @property
    def required_ring_bits(self) -> int:
        # share-wise rounding lands within h/2 of z / 2**c
        top = (2 * self.max_aggregate + self.h * self.gamma) // (2 * self.gamma) + self.offset
        return max(2, top.bit_length() + 1)

    @property
    def formula_ring_bits(self) -> int:
        return max(2, math.ceil(math.log2(self.clients + self.servers * self.noise_cap))
                   - self.trunc_bits + 2)

    @property
    def literal_ring_bits(self) -> int:
        return math.ceil(math.log2(max(self.clients, 2))) - self.trunc_bits + 1

    def client_ell(self) -> int:
        return 1

    def replace(self, **changes) -> "ProtocolConfig":
        fields = dict(epsilon=self.epsilon, trunc_bits=self.trunc_bits, servers=self.servers,
                      dims=self.dims, clients=self.clients, corrupt=self.corrupt,
                      kappa=self.kappa, ring_bits=self.ring_bits,
                      noise_cap_bits=self.noise_cap_bits, preprocessing=self.preprocessing,
                      seed=self.seed)
        fields.update(changes)
        return ProtocolConfig(**fields)


CONFIG_KEYS = {
    "epsilon": float,
    "trunc_bits": int,
    "servers": int,
    "corrupt": int,
    "kappa": int,
    "dims": int,
    "ring_bits": int,
    "noise_cap_bits": int,
    "seed": int,
    "clients": int,
    "preprocessing": str,
}


def parse_config_text(text: str) -> dict:
    """Parse flat ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            out[key] = CONFIG_KEYS[key](value)
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from None
    return out


def format_config(values: dict) -> str:
    return "".join(f"{k}={values[k]}\n" for k in CONFIG_KEYS if k in values)


def load_config(path, **overrides) -> ProtocolConfig:
    with open(path) as fh:
        values = parse_config_text(fh.read())
    values.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_values(values)


def config_from_values(values: dict) -> ProtocolConfig:
    missing = [k for k in ("epsilon", "servers", "dims", "clients") if k not in values]
    if missing:
        raise ConfigError(f"missing config keys: {', '.join(missing)}")
    cfg = ProtocolConfig(
        epsilon=values["epsilon"],
        trunc_bits=values.get("trunc_bits", 0),
        servers=values["servers"],
        dims=values["dims"],
        clients=values["clients"],
        corrupt=values.get("corrupt"),
        kappa=values.get("kappa", 40),
        ring_bits=values.get("ring_bits", 0),
        noise_cap_bits=values.get("noise_cap_bits", 0),
        preprocessing=values.get("preprocessing", "auto"),
        seed=values.get("seed", 0),
    )
    for note in cfg.notes:
        log.info(note)
    return cfg
