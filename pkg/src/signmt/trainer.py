"""Two-phase optimization: contrastive warm-up for the adapter, then joint
training of adapter + low-rank decoder deltas with the combined loss
(cross-entropy plus the alignment term).

Both schedules run on a single step clock; the learning-rate clock starts at
joint-phase step 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import spft
from .align import Temperature, pool_and_normalize, vt_align_loss, warmup_align
from .llm import lora_parameters, translation_loss


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    warmup_steps: int = 4000
    epochs: int = 40
    batch_size: int = 8
    peak_lr: float = 1e-4
    min_lr: float = 5e-5
    lr_warmup_steps: int = 10000
    beta1: float = 0.9
    beta2: float = 0.98
    weight_decay: float = 0.01
    seed: int = 0
    grad_clip: float = 1.0
    checkpoint_every: int = 0  # 0 = only final
    warmup_lr: float = 3e-3
    lora_rank: int = 8
    lora_alpha: float = 16.0
    lora_targets: tuple[str, ...] = ("q_proj", "k_proj", "v_proj", "o_proj")

    def __post_init__(self):
        if not (0 < self.min_lr <= self.peak_lr):
            raise ValueError("need 0 < min_lr <= peak_lr")
        if min(self.warmup_steps, self.epochs, self.lr_warmup_steps) < 0:
            raise ValueError("step counts must be >= 0")

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "TrainConfig":
        raw = json.loads(Path(path).read_text())
        if "lora_targets" in raw:
            raw["lora_targets"] = tuple(raw["lora_targets"])
        return cls(**raw)


def lr_at(step: int, config: TrainConfig, total_steps: int) -> float:
    """Linear ramp 0 -> peak over lr_warmup_steps, then cosine peak -> min."""
    if step < 0:
        raise ValueError("step must be >= 0")
    warm = min(config.lr_warmup_steps, total_steps)
    if step < warm:
        return config.peak_lr * step / warm
    if step >= total_steps:
        return config.min_lr
    span = total_steps - warm
    progress = (step - warm) / span
    return config.min_lr + 0.5 * (config.peak_lr - config.min_lr) * (
        1 + math.cos(math.pi * progress)
    )


def combined_loss(l_ce: torch.Tensor, l_vt: torch.Tensor) -> torch.Tensor:
    if not (torch.isfinite(l_ce) and torch.isfinite(l_vt)):
        raise TrainingError("non-finite loss component")
    return l_ce + l_vt


@dataclass
class TrainState:
    step: int = 0
    phase: str = "warmup"
    trace: list[dict] = field(default_factory=list)


def _named_train_tensors(components) -> dict[str, np.ndarray]:
    out = {}
    for name, p in components.adapter.named_parameters():
        out[f"adapter.{name}"] = p.detach().numpy().copy()
    for name, p in components.model.named_parameters():
        if name.endswith(("lora_a", "lora_b")):
            out[f"model.{name}"] = p.detach().numpy().copy()
    out["temperature.log_tau"] = components.temperature.log_tau.detach().numpy().copy()
    return out


def save_checkpoint(components, directory: str | Path, extra: dict | None = None) -> None:
    tensors = _named_train_tensors(components)
    if extra:
        tensors.update(extra)
    spft.save_tensors(directory, tensors)


def load_checkpoint(components, directory: str | Path) -> dict[str, np.ndarray]:
    tensors = spft.load_tensors(directory)
    params = dict(components.adapter.named_parameters())
    model_params = dict(components.model.named_parameters())
    with torch.no_grad():
        for name, array in tensors.items():
            if name.startswith("adapter."):
                params[name[len("adapter.") :]].copy_(torch.from_numpy(array))
            elif name.startswith("model."):
                model_params[name[len("model.") :]].copy_(torch.from_numpy(array))
            elif name == "temperature.log_tau":
                components.temperature.log_tau.copy_(torch.from_numpy(array))
    return tensors


def _adamw_state_tensors(opt: torch.optim.AdamW) -> dict[str, np.ndarray]:
    out = {}
    i = 0
    for group in opt.param_groups:
        for p in group["params"]:
            state = opt.state.get(p)
            if not state:
                i += 1
                continue
            out[f"opt.{i}.step"] = np.array([float(state["step"])])
            out[f"opt.{i}.exp_avg"] = state["exp_avg"].numpy().reshape(-1).copy()
            out[f"opt.{i}.exp_avg_sq"] = state["exp_avg_sq"].numpy().reshape(-1).copy()
            i += 1
    return out


def _restore_adamw_state(opt: torch.optim.AdamW, tensors: dict[str, np.ndarray]) -> None:
    i = 0
    for group in opt.param_groups:
        for p in group["params"]:
            key = f"opt.{i}.step"
            if key in tensors:
                opt.state[p] = {
                    "step": torch.tensor(float(tensors[key][0])),
                    "exp_avg": torch.from_numpy(tensors[f"opt.{i}.exp_avg"].copy()).view_as(p),
                    "exp_avg_sq": torch.from_numpy(
                        tensors[f"opt.{i}.exp_avg_sq"].copy()
                    ).view_as(p),
                }
            i += 1


def train(
    corpus,
    components,
    config: TrainConfig,
    out_dir: str | Path,
    resume_from: str | Path | None = None,
) -> TrainState:
    """Run the warm-up and joint phases; returns the final state with traces.

    Deterministic for a fixed seed and thread count. Checkpoints carry the
    trainable tensors plus optimizer and sampler state so a resumed run
    reproduces the uninterrupted loss trace.
    """
    from .pipeline import precompute_features  # local import avoids a cycle

    torch.set_num_threads(1)
    torch.manual_seed(config.seed)
    out_dir = Path(out_dir)
    ckpt_root = out_dir / "checkpoints"
    ckpt_root.mkdir(parents=True, exist_ok=True)
    state = TrainState()

    feats = precompute_features(corpus, components)
    table_hash_before = components.table.table_hash()

    # phase 1: adapter + temperature only, contrastive loss
    resume_tensors = None
    start_step = 0
    if resume_from is not None:
        components.ensure_lora(config)
        resume_tensors = load_checkpoint(components, resume_from)
        start_step = int(resume_tensors["train.step"][0])
        state.phase = "joint"
    elif config.warmup_steps > 0:
        pairs = [((f.z_s, f.z_m), f.text_vec) for f in feats]
        trace = warmup_align(
            components.adapter,
            pairs,
            steps=config.warmup_steps,
            temperature=components.temperature,
            batch_size=config.batch_size,
            lr=config.warmup_lr,
            seed=config.seed,
        )
        for i, value in enumerate(trace):
            state.trace.append({"phase": "warmup", "step": i, "l_vt": value})
        if components.table.table_hash() != table_hash_before:
            raise TrainingError("embedding table changed during warm-up")
        save_checkpoint(components, ckpt_root / f"phase1_step{config.warmup_steps}")

    # phase 2: adapter + temperature + low-rank decoder deltas, combined loss
    state.phase = "joint"
    components.ensure_lora(config)
    params = [p for p in components.adapter.parameters() if p.requires_grad]
    params += lora_parameters(components.model)
    params.append(components.temperature.log_tau)
    opt = torch.optim.AdamW(
        params,
        lr=config.peak_lr,
        betas=(config.beta1, config.beta2),
        weight_decay=config.weight_decay,
    )
    n = len(feats)
    steps_per_epoch = math.ceil(n / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    gen = torch.Generator().manual_seed(config.seed + 1)
    if resume_tensors is not None:
        _restore_adamw_state(opt, resume_tensors)
        gen.set_state(torch.from_numpy(resume_tensors["train.rng"].copy()))

    for step in range(start_step, total_steps):
        lr = lr_at(step, config, total_steps)
        for group in opt.param_groups:
            group["lr"] = lr
        idx = torch.randperm(n, generator=gen)[: min(config.batch_size, n)].tolist()
        ce_terms = []
        sign_vecs = []
        text_vecs = []
        for i in idx:
            f = feats[i]
            z_sm = components.adapter(f.z_s, f.z_m)
            ce_terms.append(
                translation_loss(z_sm, f.prompt_ids, f.target_ids, components.model)
            )
            sign_vecs.append(pool_and_normalize(z_sm))
            text_vecs.append(f.text_vec)
        l_ce = torch.stack(ce_terms).mean()
        l_vt = vt_align_loss(
            torch.stack(sign_vecs), torch.stack(text_vecs), components.temperature.tau.float()
        )
        loss = combined_loss(l_ce, l_vt)
        if not torch.isfinite(loss):
            save_checkpoint(
                components,
                out_dir / "abort_state",
                extra={"train.step": np.array([float(step)])},
            )
            raise TrainingError(f"non-finite loss at joint step {step}; state dumped")
        opt.zero_grad()
        loss.backward()
        torch.nn.utils.clip_grad_norm_(params, config.grad_clip)
        opt.step()
        state.step = step + 1
        state.trace.append(
            {
                "phase": "joint",
                "step": step,
                "lr": lr,
                "l_ce": l_ce.item(),
                "l_vt": l_vt.item(),
                "l_total": loss.item(),
            }
        )
        if config.checkpoint_every and (step + 1) % config.checkpoint_every == 0:
            extra = _adamw_state_tensors(opt)
            extra["train.step"] = np.array([float(step + 1)])
            extra["train.rng"] = gen.get_state().numpy().copy()
            save_checkpoint(components, ckpt_root / f"phase2_step{step + 1}", extra=extra)

    if components.table.table_hash() != table_hash_before:
        raise TrainingError("embedding table changed during joint training")
    extra = _adamw_state_tensors(opt)
    extra["train.step"] = np.array([float(total_steps)])
    extra["train.rng"] = gen.get_state().numpy().copy()
    save_checkpoint(components, ckpt_root / "final", extra=extra)
    (out_dir / "trace.jsonl").write_text(
        "".join(json.dumps(r) + "\n" for r in state.trace)
    )
    return state
