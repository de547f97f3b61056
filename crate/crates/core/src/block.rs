//! Named parameter blocks, the unit that optimizers and checkpoints walk.

/// Read-only view of one parameter tensor.
#[derive(Debug)]
pub struct Block<'a, T> {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub values: &'a [T],
    /// Whether weight decay applies (false for biases and assignment offsets).
    pub decay: bool,
}

#[derive(Debug)]
pub struct BlockMut<'a, T> {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub values: &'a mut [T],
    pub decay: bool,
}

/// Anything that owns trainable tensors.
pub trait Parameters<T> {
    fn blocks(&self) -> Vec<Block<'_, T>>;
    fn blocks_mut(&mut self) -> Vec<BlockMut<'_, T>>;

    fn num_parameters(&self) -> usize {
        self.blocks().iter().map(|b| b.values.len()).sum()
    }
}
