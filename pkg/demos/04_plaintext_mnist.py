"""The fixed-point reference trainer on MNIST (needs the IDX files).

Set QUOTIENT_DATA to the directory holding the four ``*-ubyte.gz`` files.
This runs the same integer arithmetic the secure protocols execute, only in
the clear, so it gives the accuracy a secure run would reach without paying
for the cryptography.
"""
import sys
import time

from quotient import data, nn
from quotient.fxp import PrecisionConfig


def main(epochs=1, eta=0):
    try:
        train, test = data.load_mnist(data.default_data_dir())
    except data.DataError as exc:
        sys.exit(f"MNIST not available: {exc}")
    cfg = PrecisionConfig(eta=eta)
    model = nn.Model.init(nn.mlp([784, 128, 128, 10]), cfg, seed=0)
    t0 = time.perf_counter()

    def show(row):
        print(f"epoch {row['epoch']} iter {row['iter']}: test acc {row['acc']:.4f} "
              f"({time.perf_counter() - t0:.0f} s)")

    nn.train(model, train.x, train.y, epochs=epochs, batch=128, optimizer="amsgrad",
             eval_fn=lambda m: {"acc": nn.accuracy(m, test.x, test.labels)}, log=show)


if __name__ == "__main__":
    main(*(int(v) for v in sys.argv[1:]))
