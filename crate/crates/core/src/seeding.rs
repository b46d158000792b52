//! Named random substreams derived from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Consumers of randomness within a run. Each gets its own ChaCha stream so
/// draws in one never shift another.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stream {
    PolicyInit,
    BaselineInit,
    Env,
    Exploration,
    Eval,
    Minibatch,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::PolicyInit => 1,
            Stream::BaselineInit => 2,
            Stream::Env => 3,
            Stream::Exploration => 4,
            Stream::Eval => 5,
            Stream::Minibatch => 6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Seeds {
    master: u64,
}

impl Seeds {
    pub fn new(master: u64) -> Self {
        Seeds { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn rng(&self, stream: Stream) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(stream.id());
        rng
    }
}
