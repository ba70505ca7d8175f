"""Generate a small synthetic log, train briefly, and score prompted recommendations.

    python demos/quickstart.py

Takes about a minute on a laptop CPU.  Everything runs in memory; see the
README for the equivalent command-line calls that write files.
"""

from dt4ier import ModelConfig, SyntheticWorld, WorldConfig, build_trajectories, evaluate, train
from dt4ier.evaluation import format_report
from dt4ier.training import split_users

world = SyntheticWorld(WorldConfig(num_users=120, num_items=300, num_topics=4, T=10, N=10, H=10, seed=1))
users = world.users()
features = {u.user_id: u for u in users}
trajectories = build_trajectories(world.log(users), T=10, H=10, N=10)
train_set, held_out = split_users(trajectories, 0.2)
print(f"{len(train_set)} training and {len(held_out)} held-out trajectories")

config = ModelConfig(T=10, H=10, N=10, d=32, heads=4, batch_size=32, max_steps=150, log_every=25, seed=1)
ckpt = train(config, train_set, features)
for row in ckpt.history:
    print(f"step {row['step']:>4}  L_cross {row['L_cross']:.3f}  L_contra {row['L_contra']:+.3f}  L_br {row['L_br']:.1f}")

report = evaluate(ckpt, held_out, rho=0.8, features=features)
print(format_report(report))
