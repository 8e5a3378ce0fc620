import numpy as np

from .data_definitions import OptimConfig, SgdState


def sgd_step(
    parameters: list[np.ndarray],
    gradients: list[np.ndarray],
    state: SgdState,
    epoch: int,
    optim: OptimConfig,
    lr: float | None = None,
) -> tuple[list[np.ndarray], SgdState]:
    """
    One SGD step with momentum and coupled weight decay:

        v <- momentum * v + grad + weight_decay * param
        param <- param - lr(epoch) * v

    `lr` overrides the schedule. Inputs are left untouched; new arrays are returned.
    """
    if not (len(parameters) == len(gradients) == len(state.velocities)):
        raise ValueError("parameters, gradients and velocities must align")
    step_lr = optim.lr(epoch) if lr is None else lr
    new_parameters = []
    new_velocities = []
    for param, grad, velocity in zip(parameters, gradients, state.velocities):
        if param.shape != grad.shape or param.shape != velocity.shape:
            raise ValueError(f"shape mismatch: param {param.shape}, grad {grad.shape}, velocity {velocity.shape}")
        updated_velocity = optim.momentum * velocity + grad + optim.weight_decay * param
        new_velocities.append(updated_velocity)
        new_parameters.append(param - step_lr * updated_velocity)
    return new_parameters, SgdState(velocities=new_velocities)
