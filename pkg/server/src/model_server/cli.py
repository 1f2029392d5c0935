"""Command line entry point: configure a runtime and serve it."""

import argparse
import logging

from .config import AGGREGATION_MODES, ServerConfig
from .runtime import StubRuntime
from .service import create_app


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="model-server",
        description="Serve masked-LM logits, sentence embeddings, and fine-tuning over HTTP.",
    )
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8100)
    parser.add_argument(
        "--stub",
        action="store_true",
        help="serve the deterministic stub runtime instead of real checkpoints",
    )
    defaults = ServerConfig()
    parser.add_argument("--masked-lm", default=defaults.masked_lm)
    parser.add_argument("--encoder", default=defaults.sentence_encoder)
    parser.add_argument("--device", default=defaults.device)
    parser.add_argument("--max-seq-len", type=int, default=defaults.max_seq_len)
    parser.add_argument("--learning-rate", type=float, default=defaults.learning_rate)
    parser.add_argument("--batch-size", type=int, default=defaults.batch_size)
    parser.add_argument("--epochs", type=int, default=defaults.default_epochs,
                        help="default fine-tune epochs when a request omits them")
    parser.add_argument("--aggregation", choices=AGGREGATION_MODES,
                        default=defaults.subword_aggregation)
    parser.add_argument("--log-level", default="info")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=args.log_level.upper(),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    config = ServerConfig(
        masked_lm=args.masked_lm,
        sentence_encoder=args.encoder,
        device=args.device,
        max_seq_len=args.max_seq_len,
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        default_epochs=args.epochs,
        subword_aggregation=args.aggregation,
    )
    if args.stub:
        runtime = StubRuntime()
    else:
        from .hf_runtime import HFRuntime

        runtime = HFRuntime(config)
    app = create_app(runtime, config)

    import uvicorn

    uvicorn.run(app, host=args.host, port=args.port, log_level=args.log_level)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
