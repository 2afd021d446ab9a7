"""Command-line interface.

Subcommands: ``simulate`` (synthesize a scene to WAV), ``enhance`` (run one
enhancement mode on a mixture/clean pair), ``eval`` (score an estimate
against a reference), ``rir`` (dump a room impulse response), ``report``
(batch experiment over seeded scenes). Every run is deterministic given
its ``--seed``; there are no environment-variable knobs.

Exit codes: 0 on success, 1 on total failure, 2 on usage errors.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from .dsp import TimeSignal, stft
from .harness import (
    ExperimentError,
    load_wav,
    make_corpus,
    parse_scene_config,
    run_experiment,
    save_attention,
    save_wav,
)
from .metrics import joint_loss, si_snr, stoi
from .pipeline import ENHANCE_MODES, EnhanceConfig, enhance
from .room import mix_scene, sample_scene, schroeder_rt60, simulate_rir
from .signals import synth_speech


def _scene_from_args(args):
    if args.config is not None:
        text = Path(args.config).read_text()
        return parse_scene_config(text, default_seed=args.seed)
    return sample_scene(
        args.seed,
        moving=args.moving,
        duration=args.duration,
        n_interferers=args.interferers,
    )


def _add_scene_args(parser):
    parser.add_argument("--seed", type=int, default=0, help="scene RNG seed")
    parser.add_argument("--config", help="scene config file (key = value lines)")
    parser.add_argument("--moving", action="store_true", help="moving target")
    parser.add_argument(
        "--duration", type=float, default=6.0, help="utterance length in seconds"
    )
    parser.add_argument(
        "--interferers", type=int, default=1, help="number of interferers"
    )


def _cmd_simulate(args):
    scene = _scene_from_args(args)
    n = int(round(scene.target.duration * 16000))
    if args.speech is not None:
        target = load_wav(args.speech)
        target = TimeSignal(target.samples[:1, :n])
    else:
        target = synth_speech(scene.seed, scene.target.duration)
    noise_paths = args.noise or []
    drys = []
    for i in range(len(scene.interferers)):
        if i < len(noise_paths):
            sig = load_wav(noise_paths[i])
            drys.append(TimeSignal(sig.samples[:1, :n]))
        else:
            drys.append(synth_speech((scene.seed, 1 + i), scene.target.duration))
    mixture, clean = mix_scene(scene, target, drys)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_wav(out_dir / "mixture.wav", mixture)
    save_wav(out_dir / "clean.wav", clean)
    print(
        f"scene seed={scene.seed} rt60={scene.room.rt60:.3f}s "
        f"sir={','.join(f'{s:g}' for s in scene.sir_db)}dB "
        f"moving={not scene.target.is_static} -> {out_dir}/mixture.wav"
    )
    return 0


def _cmd_enhance(args):
    mixture = load_wav(args.mixture)
    clean = load_wav(args.clean)
    cfg = EnhanceConfig(
        mode=args.mode,
        mask_mode=args.mask_mode,
        ref_channel=args.ref_channel,
        diag_loading=args.loading,
        feature_file=args.feature_file,
    )
    enhanced, artifacts = enhance(mixture, clean, cfg)
    save_wav(args.out, enhanced)
    if args.dump_attention is not None:
        dump_dir = Path(args.dump_attention)
        dump_dir.mkdir(parents=True, exist_ok=True)
        for stream in ("speech", "noise"):
            matrix = artifacts.get(f"attention_{stream}")
            if matrix is not None:
                save_attention(dump_dir / f"attention_{stream}.bin", matrix)
    print(
        f"{args.mode}: wrote {args.out} "
        f"({artifacts['flagged_count']} flagged bins)"
    )
    return 0


def _cmd_eval(args):
    ref = load_wav(args.ref).channel(0)
    est = load_wav(args.est).channel(0)
    n = min(ref.size, est.size)
    ref, est = ref[:n], est[:n]
    spec_ref = stft(TimeSignal(ref[None, :]))
    spec_est = stft(TimeSignal(est[None, :]))
    loss = joint_loss(spec_ref, spec_est, ref, est)
    print("si_snr_db,stoi,mse_term,snr_term,total_loss")
    print(
        f"{si_snr(ref, est):.6f},{stoi(ref, est):.6f},"
        f"{loss.mse_term:.6f},{loss.snr_term:.6f},{loss.total:.6f}"
    )
    return 0


def _cmd_rir(args):
    scene = _scene_from_args(args)
    rir = simulate_rir(scene.room, scene.target.start, scene.array)
    save_wav(args.out, TimeSignal(rir.taps))
    msg = f"wrote {args.out} ({rir.taps.shape[0]} mics, {rir.taps.shape[1]} taps)"
    if scene.room.rt60 > 0:
        est = schroeder_rt60(rir.taps[0])
        msg += f", rt60 target {scene.room.rt60:.3f}s / realized {est:.3f}s"
    print(msg)
    return 0


def _cmd_report(args):
    out_dir = Path(args.out_dir)
    speech_dir = args.speech_dir
    noise_dir = args.noise_dir
    if speech_dir is None:
        speech_dir = out_dir / "corpus_speech"
        make_corpus(speech_dir, 8, args.duration, seed=1000, kind="speech")
    if noise_dir is None:
        noise_dir = out_dir / "corpus_noise"
        make_corpus(noise_dir, 8, args.duration, seed=2000, kind="noise")
    scenes = [
        sample_scene(
            args.seed + i,
            moving=args.moving,
            duration=args.duration,
            n_interferers=args.interferers,
        )
        for i in range(args.scenes)
    ]
    modes = args.modes.split(",")
    report = run_experiment(
        scenes,
        modes,
        speech_dir,
        noise_dir,
        out_dir=out_dir,
        mask_mode=args.mask_mode,
        jobs=args.jobs,
    )
    print(report.to_csv(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beamlab",
        description="Mask-based and attention-weighted beamforming laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize a scene to mixture/clean WAVs")
    _add_scene_args(p)
    p.add_argument("--speech", help="mono 16 kHz WAV for the target (default: synthetic)")
    p.add_argument(
        "--noise", action="append", help="mono WAV per interferer (default: synthetic)"
    )
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("enhance", help="enhance a mixture toward its clean image")
    p.add_argument("--mixture", required=True, help="multichannel mixture WAV")
    p.add_argument("--clean", required=True, help="clean target image WAV (oracle)")
    p.add_argument("--mode", default="mvdr-batch", choices=ENHANCE_MODES)
    p.add_argument("--mask-mode", default="wlm", choices=("wlm", "irm", "ibm"))
    p.add_argument("--ref-channel", type=int, default=0)
    p.add_argument("--loading", type=float, default=1e-6)
    p.add_argument("--feature-file", help="query/key features for mvdr-tv-featfile")
    p.add_argument("--dump-attention", help="directory for attention dumps")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_enhance)

    p = sub.add_parser("eval", help="score an estimate against a reference")
    p.add_argument("--ref", required=True)
    p.add_argument("--est", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("rir", help="write a scene's room impulse response")
    _add_scene_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_rir)

    p = sub.add_parser("report", help="batch experiment over seeded scenes")
    p.add_argument("--scenes", type=int, default=4)
    p.add_argument("--seed", type=int, default=0, help="seed of the first scene")
    p.add_argument("--moving", action="store_true")
    p.add_argument("--duration", type=float, default=4.0)
    p.add_argument("--interferers", type=int, default=1)
    p.add_argument(
        "--modes", default="mvdr-batch,mvdr-tv-iscmqk", help="comma-separated"
    )
    p.add_argument("--mask-mode", default="wlm", choices=("wlm", "irm", "ibm"))
    p.add_argument("--speech-dir", help="target corpus (default: synthetic)")
    p.add_argument("--noise-dir", help="interferer corpus (default: synthetic)")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
