#!/usr/bin/env python3
"""What the decorrelating transform does to hidden activity.

ANP and DANP are trained with the same seed and learning rate on the 1-hour
weather task (synthetic hourly data). The decorrelation loss is the mean
squared off-diagonal covariance of the transformed hidden states on the test
set, logged every epoch.
"""
import sys

import numpy as np

from perturbrnn.harness import make_config, run_training

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 100

danp_cfg = make_config("weather", "DANP", "desk", epochs=epochs)
anp_cfg = danp_cfg.with_learner("ANP", eta=danp_cfg.resolved_eta())

danp = run_training(danp_cfg, seed=0)
anp = run_training(anp_cfg, seed=0)

for label, rec in (("ANP", anp), ("DANP", danp)):
    d = np.array(rec.decorrelation_loss)
    print(f"{label:<5} epoch 1 {d[0]:.3e}   last 10 epochs {d[-10:].mean():.3e}   "
          f"final test loss {rec.final('test'):.4f}   {rec.status.label()}")

print(f"ratio DANP/ANP over the last 10 epochs: "
      f"{np.mean(danp.decorrelation_loss[-10:]) / np.mean(anp.decorrelation_loss[-10:]):.4f}")
