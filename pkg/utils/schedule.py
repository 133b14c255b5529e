import math


def warmup_cosine_lr(step: int, total_steps: int, peak_lr: float, warmup_ratio: float = 0.05) -> float:
    """
    Линейный разогрев до peak_lr за warmup_ratio доли шагов, затем косинусное
    затухание до нуля. step считается с 1.
    """
    if total_steps <= 0:
        return peak_lr
    warmup = max(1, int(round(total_steps * warmup_ratio))) if warmup_ratio > 0 else 0
    if step <= warmup:
        return peak_lr * step / warmup
    progress = (step - warmup) / max(1, total_steps - warmup)
    return peak_lr * 0.5 * (1.0 + math.cos(math.pi * min(progress, 1.0)))
