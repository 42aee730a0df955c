// Wall-clock timing. Without `std` there is no clock and elapsed time reads 0.

#[cfg(feature = "std")]
pub(crate) struct Stopwatch(std::time::Instant);

#[cfg(feature = "std")]
impl Stopwatch {
    pub(crate) fn start() -> Self {
        Stopwatch(std::time::Instant::now())
    }

    pub(crate) fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[cfg(not(feature = "std"))]
pub(crate) struct Stopwatch;

#[cfg(not(feature = "std"))]
impl Stopwatch {
    pub(crate) fn start() -> Self {
        Stopwatch
    }

    pub(crate) fn seconds(&self) -> f64 {
        0.0
    }
}
