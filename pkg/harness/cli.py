"""
Командная строка g3dk: gen, train, eval, ablate, gradcheck, bench.

Коды выхода: 0 - успех, 2 - ошибка ввода-вывода или формата данных,
3 - нечисловые значения или проваленная проверка градиентов,
4 - несовпадение конфигурации и чекпойнта.
"""
import argparse
import logging
import sys
from typing import List, Optional, Sequence

from grounder.config import load_config
from grounder.evaluation import DEFAULT_THRESHOLDS, ERROR_TYPES, ModelPredictor, evaluate, load_model, write_report
from grounder.model import ABLATIONS, ablation_by_name
from grounder.stubs import STUBS, make_stub
from grounder.training import train
from synthscene.dataset import load_dataset, write_dataset
from synthscene.episodes import PROPOSAL_MODES, generate_episodes
from utils.errors import CheckpointError, ConfigError, ConfigMismatchError, DatasetFormatError, NumericError
from .ablate import ABLATION_COLUMNS, DEFAULT_VARIANTS, run_ablation
from .bench import ATTENTION_COLUMNS, LATENCY_COLUMNS, attention_table, inference_latency, write_rows
from .gradcheck import SCOPES, run_gradcheck

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_IO = 2
EXIT_NUMERIC = 3
EXIT_CONFIG = 4


class GradcheckFailed(Exception):
    pass


def _int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"ожидался список целых через запятую: {text!r}") from None


def _float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"ожидался список чисел через запятую: {text!r}") from None


def _name_list(text: str) -> List[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def cmd_gen(args) -> int:
    run = load_config(args.config)
    seed = args.seed if args.seed is not None else run.train.seed
    episodes, summary = generate_episodes(seed, args.count, run.data)
    write_dataset(args.out, episodes)
    print(
        f"episodes={summary.episodes} unique={summary.unique} "
        f"multiple={summary.multiple} skipped={summary.skipped}"
    )
    return EXIT_OK


def cmd_train(args) -> int:
    run = load_config(args.config)
    if args.workers is not None:
        run = run.override({"train.workers": args.workers})
    if args.steps is not None:
        run = run.override({"train.steps": args.steps})
    ablation = ablation_by_name(args.ablate)
    episodes = load_dataset(args.data)
    result = train(episodes, run, ablation, log_path=args.log, checkpoint_path=args.out)
    last = result.log[-1]
    print(", ".join(f"{key}={last[key]:.6f}" for key in result.columns if key != "step"))
    return EXIT_OK


def cmd_eval(args) -> int:
    run = load_config(args.config)
    if args.stub:
        predictor = make_stub(args.stub, run.train.seed)
    elif args.checkpoint:
        predictor = ModelPredictor(load_model(args.checkpoint, run, ablation_by_name(args.ablate)))
    else:
        raise ConfigError("eval", "нужен --checkpoint или --stub")
    episodes = load_dataset(args.data)
    report = evaluate(episodes, predictor, args.thresholds, proposals=args.proposals, data=run.data)
    if args.out:
        write_report(args.out, report, args.split)
    for split, subset, metric, value in report.rows(args.split):
        if not metric.startswith("error:"):
            print(f"{subset:<9} {metric:<14} {value:.4f}")
    counts = report.error_counts()
    print(" ".join(f"{name}={counts[name]}" for name in ERROR_TYPES))
    return EXIT_OK


def cmd_ablate(args) -> int:
    run = load_config(args.config)
    train_episodes = load_dataset(args.train_data)
    test_episodes = load_dataset(args.test_data)
    rows = run_ablation(
        train_episodes, test_episodes, run,
        variants=args.variants, seeds=args.seeds, views=args.views, proposals=args.proposals,
    )
    if args.out:
        write_rows(args.out, ABLATION_COLUMNS, rows)
    for row in rows:
        print(f"{row['variant']:<10} views={row['views']} acc@0.25={row['acc@0.25']:.4f} acc@0.5={row['acc@0.5']:.4f}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = run_gradcheck(args.scope, args.seed)
    for r in results:
        print(f"{r.scope:<6} {r.unit:<34} {r.error:.3e} {'ok' if r.passed else 'FAIL'}")
    failed = [r.unit for r in results if not r.passed]
    if failed:
        raise GradcheckFailed(f"Проверка градиентов не пройдена: {', '.join(failed)}")
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.latency:
        if not args.data:
            raise ConfigError("bench", "--latency требует --data")
        run = load_config(args.config)
        episodes = load_dataset(args.data)[: args.episodes]
        rows = inference_latency(episodes, run, args.decoder_blocks)
        columns = LATENCY_COLUMNS
    else:
        rows = attention_table(args.views, args.patches, args.dim, measure=not args.no_time)
        columns = ATTENTION_COLUMNS
    if args.out:
        write_rows(args.out, columns, rows)
    for row in rows:
        print(" ".join(f"{c}={row[c]:.6g}" if isinstance(row[c], float) else f"{c}={row[c]}" for c in columns))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="g3dk", description="Игрушечная 3D-привязка запросов к объектам")
    parser.add_argument("-v", "--verbose", action="store_true", help="журнал уровня DEBUG")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="сгенерировать набор эпизодов")
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--count", type=int, required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--config")
    gen.set_defaults(handler=cmd_gen)

    tr = sub.add_parser("train", help="обучить модель")
    tr.add_argument("--config")
    tr.add_argument("--data", required=True)
    tr.add_argument("--out", required=True, help="путь чекпойнта")
    tr.add_argument("--log", help="CSV журнал потерь")
    tr.add_argument("--ablate", default="full", help=f"вариант: {', '.join(ABLATIONS)} или sg|mpe|attn|lg")
    tr.add_argument("--workers", type=int)
    tr.add_argument("--steps", type=int)
    tr.set_defaults(handler=cmd_train)

    ev = sub.add_parser("eval", help="оценить чекпойнт или заглушку")
    ev.add_argument("--checkpoint")
    ev.add_argument("--stub", choices=STUBS)
    ev.add_argument("--data", required=True)
    ev.add_argument("--config")
    ev.add_argument("--proposals", choices=PROPOSAL_MODES, default="gt")
    ev.add_argument("--ablate", default="full")
    ev.add_argument("--thresholds", type=_float_list, default=list(DEFAULT_THRESHOLDS))
    ev.add_argument("--split", default="eval")
    ev.add_argument("--out", help="CSV с метриками")
    ev.set_defaults(handler=cmd_eval)

    ab = sub.add_parser("ablate", help="сравнить варианты модели")
    ab.add_argument("--config")
    ab.add_argument("--train-data", required=True)
    ab.add_argument("--test-data", required=True)
    ab.add_argument("--variants", type=_name_list, default=list(DEFAULT_VARIANTS))
    ab.add_argument("--views", type=_int_list)
    ab.add_argument("--seeds", type=_int_list)
    ab.add_argument("--proposals", choices=PROPOSAL_MODES, default="gt")
    ab.add_argument("--out")
    ab.set_defaults(handler=cmd_ablate)

    gc = sub.add_parser("gradcheck", help="проверка градиентов конечными разностями")
    gc.add_argument("--scope", choices=SCOPES + ("all",), default="op")
    gc.add_argument("--seed", type=int, default=7)
    gc.set_defaults(handler=cmd_gradcheck)

    be = sub.add_parser("bench", help="стоимость внимания или задержка вывода")
    be.add_argument("--views", type=_int_list, default=[1, 2, 4, 8])
    be.add_argument("--patches", type=_int_list, default=[16, 64, 256])
    be.add_argument("--dim", type=int, default=64)
    be.add_argument("--no-time", action="store_true", help="только аналитическое число операций")
    be.add_argument("--latency", action="store_true", help="задержка вывода по числу блоков декодера")
    be.add_argument("--data")
    be.add_argument("--config")
    be.add_argument("--episodes", type=int, default=16)
    be.add_argument("--decoder-blocks", type=_int_list, default=[1, 2, 4])
    be.add_argument("--out")
    be.set_defaults(handler=cmd_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )
    try:
        return args.handler(args)
    except (NumericError, GradcheckFailed) as e:
        logger.error(f"Ошибка в g3dk {args.command}: {e}", exc_info=True)
        return EXIT_NUMERIC
    except (ConfigMismatchError, CheckpointError, ConfigError) as e:
        logger.error(f"Ошибка в g3dk {args.command}: {e}", exc_info=True)
        return EXIT_CONFIG
    except (OSError, DatasetFormatError) as e:
        logger.error(f"Ошибка в g3dk {args.command}: {e}", exc_info=True)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
