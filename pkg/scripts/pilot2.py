import json, time
import casa_nlu as c
from casa_nlu.model import Hyperparams
from casa_nlu import training as T

full = c.generate_synthetic(1, 2500, "cable-like")
train_ds, test_ds = c.split_dataset(full, 2000, 500)
print(f"train turns {train_ds.n_turns} test turns {test_ds.n_turns}", flush=True)
hp = Hyperparams(max_epochs=30)

for variant in ("casa", "cgru", "nc"):
    for seed in (1, 2, 3):
        t0 = time.time()
        res = T.train(train_ds, variant=variant, hp=hp, seed=seed)
        rep = T.evaluate(res.model, test_ds, history_policy="predicted")
        print(json.dumps({
            "variant": variant, "seed": seed, "epochs": len(res.log),
            "mins": round((time.time()-t0)/60, 1), "best_ep": res.best_epoch,
            "ic": round(rep.ic_accuracy, 2), "fu": round(rep.ic_followup, 2),
            "ft": round(rep.ic_first_turn, 2), "slf1": round(rep.sl_token_f1, 2),
        }), flush=True)
