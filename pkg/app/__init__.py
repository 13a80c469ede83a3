# AdvClimb - anti-adversarial climbing for class activation maps
