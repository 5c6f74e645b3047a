"""Submission packaging: name -> runnable attack/defense, plus the
subprocess protocol entry point (python -m advarena.submission).

Spec strings name a strategy and its artifacts:

  attacks:   noop
             fgsm:MODEL                iterative:MODEL[@STEPS]
             mim:M1+M2+...             mim_targeted:M1+M2+...
             dynamic:M1+M2+...         augmented:M1+M2+...@PSEUDO
             fcn:FILE[@HINT_MODEL]
  defenses:  direct:MODEL              median_ensemble:M1+M2+...
             bit_depth:MODEL@BITS      randomized:MODEL
             denoised:MODEL@FILE

Model names resolve to NAME.advw inside the artifact directory; FILE is a
file name inside the same directory.  Attacks never receive true labels:
non-targeted strategies label the clean input with their own models'
fused prediction, targeted ones get the round's target labels.
"""

from __future__ import annotations

import argparse
import csv
import glob
import os
import sys

import numpy as np

from . import attacks, data, defenses, denoiser, models
from .arena import InProcessAttack, InProcessDefense, Submission
from .rng import Rng, derive_seed

ATTACK_SCHEMES = ("noop", "fgsm", "iterative", "mim", "mim_targeted",
                  "dynamic", "augmented", "fcn")
DEFENSE_SCHEMES = ("direct", "median_ensemble", "bit_depth", "randomized",
                   "denoised")


class ArtifactStore:
    """Lazily loads and caches .advw artifacts from one directory."""

    def __init__(self, directory: str):
        if not os.path.isdir(directory):
            raise FileNotFoundError(f"artifact directory {directory} does not exist")
        self.directory = directory
        self._models = {}
        self._denoisers = {}
        self._attack_nets = {}

    def _path(self, filename: str) -> str:
        path = os.path.join(self.directory, filename)
        if not os.path.exists(path):
            raise FileNotFoundError(f"artifact {path} does not exist")
        return path

    def model(self, name: str):
        if name not in self._models:
            self._models[name] = models.load(self._path(f"{name}.advw"))
        return self._models[name]

    def denoiser_net(self, filename: str):
        if filename not in self._denoisers:
            self._denoisers[filename] = denoiser.load_denoiser(self._path(filename))
        return self._denoisers[filename]

    def attack_net(self, filename: str):
        if filename not in self._attack_nets:
            self._attack_nets[filename] = attacks.load_attack_fcn(self._path(filename))
        return self._attack_nets[filename]


def fused_predict(models_seq, x: np.ndarray) -> int:
    """Pseudo-label: argmax of the uniformly averaged member logits."""
    fused = None
    for model in models_seq:
        z = model.logits(x)
        fused = z if fused is None else fused + z
    return int(np.argmax(fused / len(models_seq)))


def _split_scheme(spec: str):
    scheme, _, rest = spec.partition(":")
    return scheme, rest


def _split_arg(rest: str):
    body, _, arg = rest.partition("@")
    return body, (arg or None)


def _members(body: str, store: ArtifactStore):
    names = [n for n in body.split("+") if n]
    if not names:
        raise ValueError("spec names no models")
    return [store.model(n) for n in names]


def build_attack(spec: str, store: ArtifactStore):
    """(kind, fn) for the arena: fn(pixels, epsilon, target_label, rng)."""
    scheme, rest = _split_scheme(spec)
    if scheme not in ATTACK_SCHEMES:
        raise ValueError(f"unknown attack scheme {scheme!r} in {spec!r}")

    if scheme == "noop":
        return "nontargeted_attack", lambda x, e, t, rng: x

    if scheme == "fgsm":
        model = store.model(rest)

        def fn(x, e, t, rng):
            return attacks.fgsm(model, x, model.predict(x), e)
        return "nontargeted_attack", fn

    if scheme == "iterative":
        body, arg = _split_arg(rest)
        model = store.model(body)
        steps = int(arg) if arg else 10

        def fn(x, e, t, rng):
            cfg = attacks.AttackConfig(epsilon=e, steps=steps,
                                       seed=rng.next_u64())
            return attacks.iterative(model, x, model.predict(x), cfg)
        return "nontargeted_attack", fn

    if scheme == "mim":
        members = _members(rest, store)
        spec_e = attacks.EnsembleSpec.uniform(members, "loss_ensemble")

        def fn(x, e, t, rng):
            cfg = attacks.mim_nontargeted_config(e, seed=rng.next_u64())
            return attacks.mim_nontargeted(spec_e, x, fused_predict(members, x), cfg)
        return "nontargeted_attack", fn

    if scheme == "mim_targeted":
        members = _members(rest, store)
        spec_e = attacks.EnsembleSpec.uniform(members, "loss_ensemble")

        def fn(x, e, t, rng):
            cfg = attacks.mim_targeted_config(e, seed=rng.next_u64())
            return attacks.mim_targeted(spec_e, x, t, cfg)
        return "targeted_attack", fn

    if scheme == "dynamic":
        members = _members(rest, store)

        def fn(x, e, t, rng):
            cfg = attacks.AttackConfig(epsilon=e, steps=20, targeted=True,
                                       seed=rng.next_u64())
            return attacks.dynamic_iterative_ensemble(members, x, t, cfg)
        return "targeted_attack", fn

    if scheme == "augmented":
        body, arg = _split_arg(rest)
        if not arg:
            raise ValueError(f"augmented spec {spec!r} needs @PSEUDO_MODEL")
        members = _members(body, store)
        pseudo = store.model(arg)

        def fn(x, e, t, rng):
            cfg = attacks.AttackConfig(epsilon=e, steps=8, aug_samples=2,
                                       warp_spread=1.0, random_start=True,
                                       seed=rng.next_u64())
            return attacks.augmented_ensemble_attack(members, pseudo, x, cfg)
        return "nontargeted_attack", fn

    # fcn
    body, arg = _split_arg(rest)
    net = store.attack_net(body)
    hint_model = store.model(arg) if arg else None
    if net.hints and hint_model is None:
        raise ValueError(f"fcn spec {spec!r} needs @HINT_MODEL (net uses hints)")

    def fn(x, e, t, rng):
        return attacks.apply_attack_fcn(net, x, e, hint_model=hint_model)
    return "nontargeted_attack", fn


def build_defense(spec: str, store: ArtifactStore):
    """fn for the arena: fn(pixels, rng) -> label."""
    scheme, rest = _split_scheme(spec)
    if scheme not in DEFENSE_SCHEMES:
        raise ValueError(f"unknown defense scheme {scheme!r} in {spec!r}")

    if scheme == "direct":
        model = store.model(rest)
        return lambda x, rng: defenses.defend_direct(model, x)

    if scheme == "median_ensemble":
        members = _members(rest, store)
        return lambda x, rng: defenses.defend_median_ensemble(members, x)

    if scheme == "bit_depth":
        body, arg = _split_arg(rest)
        if not arg:
            raise ValueError(f"bit_depth spec {spec!r} needs @BITS")
        model = store.model(body)
        bits = int(arg)
        return lambda x, rng: defenses.defend_bit_depth(model, x, bits)

    if scheme == "randomized":
        model = store.model(rest)

        def fn(x, rng):
            cfg = defenses.DefenseConfig(kind="random_resize_pad", seed=rng.next_u64())
            return defenses.defend_random_resize_pad(model, x, cfg)
        return fn

    # denoised
    body, arg = _split_arg(rest)
    if not arg:
        raise ValueError(f"denoised spec {spec!r} needs @DENOISER_FILE")
    model = store.model(body)
    net = store.denoiser_net(arg)
    return lambda x, rng: defenses.defend_denoised(model, net, x)


def build_attack_submission(sub_id: str, spec: str, store: ArtifactStore) -> Submission:
    kind, fn = build_attack(spec, store)
    return Submission(sub_id, kind, InProcessAttack(fn))


def build_defense_submission(sub_id: str, spec: str, store: ArtifactStore) -> Submission:
    fn = build_defense(spec, store)
    return Submission(sub_id, "defense", InProcessDefense(fn))


# ---------------------------------------------------------------------------
# Subprocess protocol entry point

def _read_manifest(input_dir: str):
    """(image_id, filename, target_label|None) rows; falls back to globbing
    *.ppm with the stem as the id when no manifest exists."""
    manifest = os.path.join(input_dir, "images.csv")
    rows = []
    if os.path.exists(manifest):
        with open(manifest, newline="") as fh:
            for row in csv.DictReader(fh):
                target = row.get("target_label")
                rows.append((row["image_id"], row["filename"],
                             int(target) if target not in (None, "") else None))
    else:
        for path in sorted(glob.glob(os.path.join(input_dir, "*.ppm"))):
            stem = os.path.splitext(os.path.basename(path))[0]
            rows.append((stem, os.path.basename(path), None))
    return rows


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="advarena.submission",
        description="Run one packaged submission under the arena protocol.")
    parser.add_argument("mode", choices=("attack", "defense"))
    parser.add_argument("--spec", required=True, help="strategy spec string")
    parser.add_argument("--artifacts", required=True,
                        help="directory holding .advw model files")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--input-dir", required=True)
    parser.add_argument("--output-dir", help="attack mode: where outputs go")
    parser.add_argument("--output-file", help="defense mode: labels file")
    parser.add_argument("--epsilon", type=int,
                        help="attack mode: budget in 0..255 units")
    args = parser.parse_args(argv)

    store = ArtifactStore(args.artifacts)
    rows = _read_manifest(args.input_dir)

    if args.mode == "attack":
        if args.output_dir is None or args.epsilon is None:
            parser.error("attack mode needs --output-dir and --epsilon")
        kind, fn = build_attack(args.spec, store)
        epsilon = args.epsilon / 255.0
        os.makedirs(args.output_dir, exist_ok=True)
        for image_id, filename, target in rows:
            pixels = data.read_image(os.path.join(args.input_dir, filename))
            if kind == "targeted_attack" and target is None:
                raise SystemExit(f"image {image_id}: targeted attack but no target label")
            rng = Rng(derive_seed(args.seed, "image", image_id))
            adv = fn(pixels, epsilon, target, rng)
            adv = attacks.project_linf(np.asarray(adv, dtype=np.float64),
                                       pixels, epsilon)
            data.write_image(os.path.join(args.output_dir, filename), adv)
        return 0

    if args.output_file is None:
        parser.error("defense mode needs --output-file")
    fn = build_defense(args.spec, store)
    lines = []
    for image_id, filename, _ in rows:
        pixels = data.read_image(os.path.join(args.input_dir, filename))
        rng = Rng(derive_seed(args.seed, "image", image_id))
        lines.append(f"{image_id},{int(fn(pixels, rng))}")
    with open(args.output_file, "w") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))
    return 0


if __name__ == "__main__":
    sys.exit(main())
