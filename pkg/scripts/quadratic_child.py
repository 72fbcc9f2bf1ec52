"""
Reference evaluator child for the external_process bridge.

Reads {"manifest_path", "iteration", "sample_index"} lines on stdin and answers
{"loss": ||ratio - optimum||^2} per line. Useful for exercising the protocol
end to end without a training stack.

    python scripts/quadratic_child.py --optimum 0.3 0.7
"""

import argparse
import json
import sys
import time


def parse_arguments():
    parser = argparse.ArgumentParser(description="Quadratic-loss evaluator child")
    parser.add_argument("--optimum", type=float, nargs="+", required=True,
                        help="Optimal mixing ratio, one weight per domain")
    parser.add_argument("--crash-after", type=int, default=None,
                        help="Exit without answering after this many requests")
    parser.add_argument("--delay", type=float, default=0.0, help="Seconds to sleep per request")
    parser.add_argument("--reply-error", action="store_true", help="Answer every request with an error")
    return parser.parse_args()


def main():
    args = parse_arguments()
    served = 0
    for line in sys.stdin:
        if args.crash_after is not None and served >= args.crash_after:
            sys.exit(3)
        request = json.loads(line)
        if args.delay:
            time.sleep(args.delay)
        if args.reply_error:
            print(json.dumps({"error": "refusing to train"}), flush=True)
            served += 1
            continue
        with open(request["manifest_path"], "r", encoding="utf-8") as f:
            manifest = json.load(f)
        total = manifest["total_size"]
        ratio = [len(ids) / total for ids in manifest["selections"].values()]
        loss = sum((r - o) ** 2 for r, o in zip(ratio, args.optimum))
        print(json.dumps({"loss": loss}), flush=True)
        served += 1


if __name__ == "__main__":
    main()
