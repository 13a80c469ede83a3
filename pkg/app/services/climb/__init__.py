# Anti-adversarial climbing and its diagnostics