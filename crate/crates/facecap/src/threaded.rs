//! Wall-clock timing and a background identity solver.

use std::sync::mpsc::{channel, Receiver, Sender};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use facecap_core::pipeline::{Clock, IdentityJob, IdentityScheduler, IdentityUpdate};

/// Nanoseconds since construction.
#[derive(Debug, Clone, Copy)]
pub struct InstantClock(Instant);

impl Default for InstantClock {
    fn default() -> Self {
        Self(Instant::now())
    }
}

impl Clock for InstantClock {
    fn now_ns(&self) -> u64 {
        self.0.elapsed().as_nanos() as u64
    }
}

/// Runs identity solves on one worker thread. Results are picked up by
/// `poll` at frame boundaries, so tracking never waits on a solve.
pub struct ThreadScheduler {
    jobs: Option<Sender<IdentityJob>>,
    results: Receiver<IdentityUpdate>,
    running: bool,
    worker: Option<JoinHandle<()>>,
}

impl ThreadScheduler {
    pub fn new() -> Self {
        Self::with_delay(Duration::ZERO)
    }

    /// Every solve additionally sleeps for `delay`; used to check that a slow
    /// solve does not stall the frame loop.
    pub fn with_delay(delay: Duration) -> Self {
        let (jobs, inbox) = channel::<IdentityJob>();
        let (outbox, results) = channel();
        let worker = std::thread::Builder::new()
            .name("identity-solve".into())
            .spawn(move || {
                for job in inbox {
                    std::thread::sleep(delay);
                    if outbox.send(job.run()).is_err() {
                        break;
                    }
                }
            })
            .expect("spawn identity worker");
        Self {
            jobs: Some(jobs),
            results,
            running: false,
            worker: Some(worker),
        }
    }
}

impl Default for ThreadScheduler {
    fn default() -> Self {
        Self::new()
    }
}

impl IdentityScheduler for ThreadScheduler {
    fn submit(&mut self, job: IdentityJob) -> bool {
        if self.running {
            return false;
        }
        let sent = self.jobs.as_ref().is_some_and(|tx| tx.send(job).is_ok());
        self.running = sent;
        sent
    }

    fn poll(&mut self) -> Option<IdentityUpdate> {
        let r = self.results.try_recv().ok();
        if r.is_some() {
            self.running = false;
        }
        r
    }

    fn busy(&self) -> bool {
        self.running
    }
}

impl Drop for ThreadScheduler {
    fn drop(&mut self) {
        self.jobs.take();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use facecap_core::facemodel::toy::{default_focal, toy_rig, ToyRigConfig, DEFAULT_DEPTH};
    use facecap_core::facemodel::{image_center, project_landmarks, ShapeParams};
    use facecap_core::pipeline::SyncScheduler;
    use facecap_core::solvers::Keyframe;
    use std::sync::Arc;

    fn job() -> IdentityJob {
        let rig = toy_rig(&ToyRigConfig::default()).unwrap();
        let d = rig.dims();
        let c = image_center(128, 128);
        let mut truth = ShapeParams::neutral(
            d.expressions,
            d.landmarks,
            d.identities,
            DEFAULT_DEPTH,
            default_focal(128.0),
        );
        truth.identity[0] = 0.8;
        let lm = project_landmarks(&truth, &rig, c).unwrap().0;
        IdentityJob {
            id: 5,
            rig: Arc::new(rig),
            keyframes: vec![Keyframe::new(&truth, lm)],
            identity: vec![0.0; d.identities],
            focal: truth.focal,
            principal: c,
            config: Default::default(),
        }
    }

    #[test]
    fn threaded_result_matches_synchronous() {
        let mut sync = SyncScheduler::default();
        assert!(sync.submit(job()));
        let expect = sync.poll().unwrap();

        let mut s = ThreadScheduler::with_delay(Duration::from_millis(30));
        assert!(s.poll().is_none());
        assert!(s.submit(job()));
        assert!(s.busy());
        assert!(!s.submit(job()), "one solve at a time");
        assert!(s.poll().is_none(), "still sleeping");
        let got = loop {
            if let Some(u) = s.poll() {
                break u;
            }
            std::thread::sleep(Duration::from_millis(2));
        };
        assert_eq!(got, expect);
        assert!(!s.busy());
    }

    #[test]
    fn instant_clock_advances() {
        let c = InstantClock::default();
        let a = c.now_ns();
        std::thread::sleep(Duration::from_millis(1));
        assert!(c.now_ns() >= a + 1_000_000);
    }
}
