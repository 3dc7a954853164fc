/// Number of taps of the powerline filter.
pub const TAPS: usize = 5;

/// Trailing five-tap moving average.
///
/// At 250 Hz one 50 Hz period spans exactly five samples, so the mean of any
/// five consecutive samples cancels a 50 Hz component completely. Nothing is
/// emitted until five inputs have been seen; every output then corresponds
/// to the middle input of the window, i.e. it lags the newest input by two
/// samples (8 ms).
#[derive(Debug, Clone, Default)]
pub struct MovingAverage5 {
    window: [f64; TAPS],
    len: usize,
    next: usize,
}

impl MovingAverage5 {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_primed(&self) -> bool {
        self.len == TAPS
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }

    /// Adds one input; returns the window mean once primed.
    ///
    /// The sum runs oldest to newest so that other implementations of the
    /// same filter can reproduce results bit for bit.
    pub fn push(&mut self, x: f64) -> Option<f64> {
        self.window[self.next] = x;
        self.next = (self.next + 1) % TAPS;
        if self.len < TAPS {
            self.len += 1;
        }
        if !self.is_primed() {
            return None;
        }
        let mut sum = 0.0;
        for i in 0..TAPS {
            sum += self.window[(self.next + i) % TAPS];
        }
        Some(sum / TAPS as f64)
    }
}
