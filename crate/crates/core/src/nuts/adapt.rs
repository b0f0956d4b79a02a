/// Dual-averaging step-size adaptation (Nesterov primal-dual averaging as
/// used by NUTS), driven by per-iteration acceptance statistics.
#[derive(Debug, Clone)]
pub struct DualAveraging {
    target: f64,
    mu: f64,
    gamma: f64,
    t0: f64,
    kappa: f64,
    counter: f64,
    s_bar: f64,
    log_step: f64,
    log_step_bar: f64,
}

impl DualAveraging {
    pub fn new(initial_step: f64, target_accept: f64) -> Self {
        Self {
            target: target_accept,
            mu: (10.0 * initial_step).ln(),
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
            counter: 0.0,
            s_bar: 0.0,
            log_step: initial_step.ln(),
            log_step_bar: 0.0,
        }
    }

    /// Feeds one acceptance statistic and returns the next step size.
    pub fn update(&mut self, accept_stat: f64) -> f64 {
        let accept_stat = if accept_stat.is_finite() { accept_stat.clamp(0.0, 1.0) } else { 0.0 };
        self.counter += 1.0;
        let eta = 1.0 / (self.counter + self.t0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - accept_stat);
        self.log_step = self.mu - self.s_bar * self.counter.sqrt() / self.gamma;
        let w = self.counter.powf(-self.kappa);
        self.log_step_bar = w * self.log_step + (1.0 - w) * self.log_step_bar;
        self.log_step.exp()
    }

    pub fn current_step(&self) -> f64 {
        self.log_step.exp()
    }

    /// Averaged step size, frozen for sampling once warmup ends.
    pub fn final_step(&self) -> f64 {
        if self.counter == 0.0 {
            self.current_step()
        } else {
            self.log_step_bar.exp()
        }
    }
}

/// Runs dual averaging over a recorded acceptance history.
pub fn adapt_step_size(initial_step: f64, target_accept: f64, history: &[f64]) -> f64 {
    let mut da = DualAveraging::new(initial_step, target_accept);
    for &a in history {
        da.update(a);
    }
    da.final_step()
}
