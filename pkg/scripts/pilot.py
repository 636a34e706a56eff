import json, time
import casa_nlu as c
from casa_nlu.model import Hyperparams
from casa_nlu import training as T

full = c.generate_synthetic(1, 2500, "cable-like")
train_ds, test_ds = c.split_dataset(full, 2000, 500)
print(f"train turns {train_ds.n_turns} test turns {test_ds.n_turns}", flush=True)
hp = Hyperparams(max_epochs=25, seeds=(1,))

for variant in ("casa", "nc", "cgru"):
    t0 = time.time()
    res = T.train(train_ds, variant=variant, hp=hp, seed=1)
    rep = T.evaluate(res.model, test_ds, history_policy="predicted")
    gold = T.evaluate(res.model, test_ds, history_policy="gold")
    print(json.dumps({
        "variant": variant, "epochs": len(res.log), "mins": round((time.time()-t0)/60, 1),
        "ic": round(rep.ic_accuracy, 2), "fu": round(rep.ic_followup, 2),
        "ft": round(rep.ic_first_turn, 2), "slf1": round(rep.sl_token_f1, 2),
        "gold_ic": round(gold.ic_accuracy, 2), "gold_fu": round(gold.ic_followup, 2),
        "best_ep": res.best_epoch,
    }), flush=True)
