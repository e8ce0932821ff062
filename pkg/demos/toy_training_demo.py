"""Train the toy dilated segmenter on a small grating set and use it as a mask source.

Kept small so it finishes in about a minute; the acceptance suite runs the full size.

Run: python3 demos/toy_training_demo.py
"""
import numpy as np

from ulprint.augment import AugmentConfig
from ulprint.segnet.losses import iou
from ulprint.segnet.model import ToyNetConfig, toy_train
from ulprint.segnet.predict import ModelPredictor, predict_with_fallback
from ulprint.synthetic import grating_sample


def main() -> None:
    data = [grating_sample(128, seed=0, index=i) for i in range(40)]
    result = toy_train(data, ToyNetConfig(), epochs=8, lr=3e-3, seed=0,
                       augment=AugmentConfig(crop=96),
                       log=lambda row: print("epoch {}: loss {:.4f}, val IoU {:.4f}".format(*row)))
    print(f"best val IoU {result.best_iou:.4f} at epoch {result.best_epoch}")

    predictor = ModelPredictor(result.model)
    scores = []
    for i in range(5):
        img, truth = grating_sample(128, seed=9, index=i)
        mask, report = predict_with_fallback(img, predictor, return_report=True)
        scores.append(iou(mask, truth))
        print(f"held-out {i}: IoU {scores[-1]:.3f}, fallback {'used' if report.triggered else 'not needed'}")
    print(f"mean held-out IoU {np.mean(scores):.3f}")


if __name__ == "__main__":
    main()
