"""Alternating GAN training with per-term loss logging and checkpoints.

Each step updates the discriminator on the regularized total loss, then
the generator on the feature-matching loss against a fresh noise batch.
RNG use is stateless per (seed, purpose, index) so resumed runs replay the
exact trajectory of an uninterrupted one.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import losses as L
from . import nn
from . import tensor as T
from .data import ImageSet, PatchPairSet, normalize
from .errors import ConfigError, FormatError, NumericalError
from .io_formats import Reader, Writer
from .losses import LossBreakdown, RegularizerConfig
from .quantize import BitMatrix, sign_vec
from .tensor import Tensor

# substream tags: (seed, tag[, index])
_SS_GEN_INIT = 0
_SS_DISC_INIT = 1
_SS_NOISE = 2
_SS_SHUFFLE = 3


@dataclass
class TrainConfig:
    task: str = "retrieval"          # retrieval | matching | toy
    code_bits: int = 32
    epochs: int = 10
    batch_size: int = 64
    z_dim: int = 100
    learning_rate: float = 3e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    reg: RegularizerConfig = field(default_factory=RegularizerConfig)
    seed: int = 0
    reg_target: str = "real"         # real | fake | both
    scale_profile: str = "paper"     # paper | desk
    d_steps_per_g: int = 1
    in_hw: int = 0                   # 0 = profile default
    in_channels: int = 0             # 0 = task default
    gen_base_channels: int = 64
    dtype: str = "f64"               # f64 | f32

    def __post_init__(self):
        if self.task not in ("retrieval", "matching", "toy"):
            raise ConfigError(f"unknown task {self.task!r}")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (pairwise losses need pairs)")
        if self.scale_profile not in ("paper", "desk"):
            raise ConfigError(f"unknown scale_profile {self.scale_profile!r}")
        if self.reg_target not in ("real", "fake", "both"):
            raise ConfigError(f"unknown reg_target {self.reg_target!r}")
        if self.dtype not in ("f64", "f32"):
            raise ConfigError(f"unknown dtype {self.dtype!r}")
        if self.learning_rate <= 0 or self.epochs < 0 or self.z_dim < 1:
            raise ConfigError("invalid learning_rate/epochs/z_dim")
        if self.d_steps_per_g < 1:
            raise ConfigError("d_steps_per_g must be >= 1")
        if isinstance(self.reg, dict):
            self.reg = RegularizerConfig(**self.reg)

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "f64" else np.float32

    def disc_task(self):
        return "matching" if self.task == "matching" else "retrieval"

    def profile(self):
        return "desk" if self.task == "toy" else self.scale_profile

    def resolved_in_hw(self):
        if self.in_hw:
            return self.in_hw
        return 16 if self.profile() == "desk" else 32

    def resolved_in_channels(self):
        if self.in_channels:
            return self.in_channels
        return 1 if self.task == "matching" else 3


class Adam:
    """Adaptive-moment optimizer; a zero gradient leaves params unchanged
    because both moment buffers then stay exactly zero."""

    def __init__(self, params, lr=3e-4, beta1=0.5, beta2=0.999, eps=1e-8):
        self.params = list(params)  # (name, Tensor)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in self.params}
        self.v = {n: np.zeros_like(p.data) for n, p in self.params}

    def zero_grad(self):
        for _, p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, p in self.params:
            g = p.grad if p.grad is not None else 0.0
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * (g * g if p.grad is not None else 0.0)
            mhat = self.m[name] / c1
            vhat = self.v[name] / c2
            p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def build_models(cfg):
    """Generator + discriminator from a config, with isolated init streams."""
    hw = cfg.resolved_in_hw()
    ch = cfg.resolved_in_channels()
    disc = nn.build_discriminator(
        cfg.disc_task(), code_bits=cfg.code_bits, profile=cfg.profile(),
        in_hw=hw, in_channels=ch,
        seed=np.random.SeedSequence([cfg.seed, _SS_DISC_INIT]),
        dtype=cfg.np_dtype,
    )
    gen = nn.build_generator(
        cfg.z_dim, (ch, hw, hw), base_channels=cfg.gen_base_channels,
        seed=np.random.SeedSequence([cfg.seed, _SS_GEN_INIT]),
        dtype=cfg.np_dtype,
    )
    return gen, disc


def _noise_rng(cfg, step):
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, _SS_NOISE, step]))


def _shuffle_rng(cfg, epoch):
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, _SS_SHUFFLE, epoch]))


def _check_finite(breakdown_terms, step):
    bad = {k: v for k, v in breakdown_terms.items() if not np.isfinite(v)}
    if bad:
        dump = ", ".join(f"{k}={v!r}" for k, v in bad.items())
        raise NumericalError(f"non-finite loss at step {step}: {dump}")


def train_step(gen, disc, real_batch, cfg, step, opt_d, opt_g):
    """One D update on the total loss, then one G feature-matching update."""
    n = real_batch.shape[0]
    rng = _noise_rng(cfg, step)
    dt = cfg.np_dtype

    # --- discriminator update ------------------------------------------
    z = rng.uniform(-1.0, 1.0, size=(n, cfg.z_dim)).astype(dt)
    fake_pixels = gen.forward(Tensor(z, dtype=dt))[0].data  # constant for D
    real = Tensor(np.asarray(real_batch, dtype=dt))
    logit_r, f_r, h_r = disc.forward(real)
    logit_f, f_f, h_f = disc.forward(Tensor(fake_pixels))

    if cfg.reg_target == "real":
        f_reg, h_reg = f_r, h_r
    elif cfg.reg_target == "fake":
        f_reg, h_reg = f_f, h_f
    else:
        f_reg, h_reg = T.concat0([f_r, f_f]), T.concat0([h_r, h_f])

    s_f = T.softsign(f_reg, cfg.reg.gamma)
    b_h = sign_vec(h_reg.data)  # hard sign, gradient-stopped by construction

    l_d = L.loss_gan_d(logit_r, logit_f)
    l_dmr = L.loss_dmr(b_h, s_f)
    l_me = L.loss_me(s_f)
    l_mac = L.loss_mac(s_f, b_h, cfg.reg.beta)
    total, bd = L.total_loss(l_d, l_dmr, l_me, l_mac, cfg.reg)
    _check_finite(
        {"l_d": bd.l_d, "l_dmr": bd.l_dmr, "l_me": bd.l_me,
         "l_mac": bd.l_mac, "l_total": bd.l_total}, step)

    opt_d.zero_grad()
    opt_g.zero_grad()
    T.backward(total)
    opt_d.step()

    # --- generator update ------------------------------------------------
    z2 = rng.uniform(-1.0, 1.0, size=(n, cfg.z_dim)).astype(dt)
    fake2 = gen.forward(Tensor(z2, dtype=dt))[0]
    _, f_fake2, _ = disc.forward(fake2)
    l_g = L.loss_feature_matching(Tensor(f_r.data), f_fake2)
    bd.l_g = float(l_g.data)
    _check_finite({"l_g": bd.l_g}, step)

    opt_d.zero_grad()
    opt_g.zero_grad()
    T.backward(l_g)
    opt_g.step()
    return bd


def _training_pixels(dataset):
    if isinstance(dataset, ImageSet):
        return dataset.float_images()
    if isinstance(dataset, PatchPairSet):
        return normalize(dataset.all_patches())
    raise ConfigError(f"cannot train on {type(dataset).__name__}")


def train(cfg, dataset, log=None, checkpoint_path=None, checkpoint_every=0,
          resume=None, progress=None):
    """Full training run over shuffled full-size minibatches.

    `log` (a list, when given) collects (step, LossBreakdown). Returns the
    final Checkpoint.
    """
    pixels = _training_pixels(dataset)
    if len(pixels) < cfg.batch_size:
        raise ConfigError(
            f"dataset of {len(pixels)} examples smaller than batch_size {cfg.batch_size}")
    hw = cfg.resolved_in_hw()
    ch = cfg.resolved_in_channels()
    if tuple(pixels.shape[1:]) != (ch, hw, hw):
        raise ConfigError(
            f"dataset examples {tuple(pixels.shape[1:])} do not match configured "
            f"input {(ch, hw, hw)}")

    if resume is not None:
        gen, disc, opt_d, opt_g = resume.restore(cfg)
        start_step = resume.step
    else:
        gen, disc = build_models(cfg)
        opt_d = Adam([p for p in disc.parameters()], lr=cfg.learning_rate,
                     beta1=cfg.adam_beta1, beta2=cfg.adam_beta2, eps=cfg.adam_eps)
        opt_g = Adam([p for p in gen.parameters()], lr=cfg.learning_rate,
                     beta1=cfg.adam_beta1, beta2=cfg.adam_beta2, eps=cfg.adam_eps)
        start_step = 0

    steps_per_epoch = len(pixels) // cfg.batch_size
    total_steps = cfg.epochs * steps_per_epoch
    step = start_step
    while step < total_steps:
        epoch = step // steps_per_epoch
        order = _shuffle_rng(cfg, epoch).permutation(len(pixels))
        for b in range(step % steps_per_epoch, steps_per_epoch):
            idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            bd = train_step(gen, disc, pixels[idx], cfg, step, opt_d, opt_g)
            step += 1
            if log is not None:
                log.append((step, bd))
            if progress is not None:
                progress(step, total_steps, bd)
            if checkpoint_path and checkpoint_every and step % checkpoint_every == 0:
                Checkpoint.capture(gen, disc, opt_d, opt_g, step, cfg).save(checkpoint_path)
            if step >= total_steps:
                break

    ckpt = Checkpoint.capture(gen, disc, opt_d, opt_g, step, cfg)
    if checkpoint_path:
        ckpt.save(checkpoint_path)
    return ckpt


def extract_features(disc, pixels, batch=256):
    """Low-dimensional feature values f(x) for normalized pixels."""
    outs = []
    for i in range(0, len(pixels), batch):
        chunk = np.asarray(pixels[i : i + batch], dtype=disc.dtype)
        _, f, _ = disc.forward(Tensor(chunk))
        outs.append(f.data)
    return np.concatenate(outs, axis=0)


def extract_codes(disc, dataset, batch=256):
    """sign(f(x)) codes for a dataset; returns (BitMatrix, labels-or-None)."""
    if isinstance(dataset, ImageSet):
        pixels, labels = dataset.float_images(), dataset.labels
    elif isinstance(dataset, PatchPairSet):
        pixels, labels = normalize(dataset.all_patches()), None
    else:
        pixels, labels = np.asarray(dataset), None
    feats = extract_features(disc, pixels, batch=batch)
    return BitMatrix.pack(sign_vec(feats)), labels


# checkpoint file -----------------------------------------------------------

CKPT_MAGIC = "BGCK"


@dataclass
class Checkpoint:
    gen_params: dict      # name -> float64 ndarray
    disc_params: dict
    opt_state: dict       # {"d": {"t": int, "m": {...}, "v": {...}}, "g": ...}
    step: int
    config: dict          # TrainConfig echo

    @classmethod
    def capture(cls, gen, disc, opt_d, opt_g, step, cfg):
        def snap(params):
            return {n: p.data.astype(np.float64).copy() for n, p in params}

        def opt_snap(opt):
            return {
                "t": opt.t,
                "m": {n: a.astype(np.float64).copy() for n, a in opt.m.items()},
                "v": {n: a.astype(np.float64).copy() for n, a in opt.v.items()},
            }

        return cls(snap(gen.parameters()), snap(disc.parameters()),
                   {"d": opt_snap(opt_d), "g": opt_snap(opt_g)},
                   step, asdict(cfg))

    def restore(self, cfg=None):
        """Rebuild (gen, disc, opt_d, opt_g) with the stored state applied."""
        if cfg is None:
            cfg = TrainConfig(**self.config)
        gen, disc = build_models(cfg)
        for net, saved in ((gen, self.gen_params), (disc, self.disc_params)):
            for name, p in net.parameters():
                if name not in saved:
                    raise FormatError(f"checkpoint missing parameter {name}")
                if saved[name].shape != p.data.shape:
                    raise FormatError(f"checkpoint shape mismatch for {name}")
                p.data = saved[name].astype(cfg.np_dtype).copy()
        opt_d = Adam([p for p in disc.parameters()], lr=cfg.learning_rate,
                     beta1=cfg.adam_beta1, beta2=cfg.adam_beta2, eps=cfg.adam_eps)
        opt_g = Adam([p for p in gen.parameters()], lr=cfg.learning_rate,
                     beta1=cfg.adam_beta1, beta2=cfg.adam_beta2, eps=cfg.adam_eps)
        for opt, key in ((opt_d, "d"), (opt_g, "g")):
            st = self.opt_state[key]
            opt.t = int(st["t"])
            for n in opt.m:
                opt.m[n] = st["m"][n].astype(cfg.np_dtype).copy()
                opt.v[n] = st["v"][n].astype(cfg.np_dtype).copy()
        return gen, disc, opt_d, opt_g

    def config_obj(self):
        return TrainConfig(**self.config)

    def save(self, path):
        """BGCK container: JSON table header + raw float64 LE blobs + CRC."""
        data = self.save_bytes()
        with open(path, "wb") as fh:
            fh.write(data)
        return data

    def save_bytes(self):
        """Serialized BGCK bytes without touching the filesystem."""
        tables = []
        blobs = []
        for section, params in (("gen", self.gen_params), ("disc", self.disc_params),
                                ("opt.d.m", self.opt_state["d"]["m"]),
                                ("opt.d.v", self.opt_state["d"]["v"]),
                                ("opt.g.m", self.opt_state["g"]["m"]),
                                ("opt.g.v", self.opt_state["g"]["v"])):
            for name in sorted(params):
                arr = np.asarray(params[name], dtype=np.float64)
                tables.append({"section": section, "name": name,
                               "shape": list(arr.shape)})
                blobs.append(arr)
        header = json.dumps(
            {"step": self.step, "config": self.config,
             "opt_t": {"d": self.opt_state["d"]["t"], "g": self.opt_state["g"]["t"]},
             "layers": tables},
            sort_keys=True, separators=(",", ":")).encode("utf-8")
        w = Writer(CKPT_MAGIC)
        w.u32(len(header))
        w.raw(header)
        for arr in blobs:
            w.array(arr)
        return w.finish()

    @classmethod
    def load(cls, path):
        r = Reader.open(path, CKPT_MAGIC)
        hlen = r.u32()
        try:
            header = json.loads(r._take(hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"{path}: bad checkpoint header: {exc}") from exc
        sections = {"gen": {}, "disc": {}, "opt.d.m": {}, "opt.d.v": {},
                    "opt.g.m": {}, "opt.g.v": {}}
        for entry in header["layers"]:
            sec = entry["section"]
            if sec not in sections:
                raise FormatError(f"{path}: unknown checkpoint section {sec!r}")
            sections[sec][entry["name"]] = r.array(np.float64, tuple(entry["shape"]))
        r.expect_exhausted()
        opt_state = {
            "d": {"t": header["opt_t"]["d"], "m": sections["opt.d.m"], "v": sections["opt.d.v"]},
            "g": {"t": header["opt_t"]["g"], "m": sections["opt.g.m"], "v": sections["opt.g.v"]},
        }
        return cls(sections["gen"], sections["disc"], opt_state,
                   int(header["step"]), header["config"])
