use std::collections::HashMap;

use super::records::InteractionRecord;

/// Index reserved for padding in both the item and category spaces.
pub const PAD: u32 = 0;

/// Dense indices for users, items and categories, in first-seen order.
///
/// Items and categories start at 1; index 0 is [`PAD`].
#[derive(Clone, Debug, Default)]
pub struct Vocab {
    users: Vec<String>,
    items: Vec<String>,
    categories: Vec<String>,
    user_index: HashMap<String, u32>,
    item_index: HashMap<String, u32>,
    category_index: HashMap<String, u32>,
    item_category: Vec<u32>,
}

/// One interaction with its ids resolved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Event {
    pub item: u32,
    pub category: u32,
    pub timestamp: u64,
}

fn intern(map: &mut HashMap<String, u32>, names: &mut Vec<String>, key: &str) -> u32 {
    if let Some(&i) = map.get(key) {
        return i;
    }
    let i = names.len() as u32;
    names.push(key.to_string());
    map.insert(key.to_string(), i);
    i
}

impl Vocab {
    pub fn new() -> Self {
        Vocab {
            items: vec!["<pad>".into()],
            categories: vec!["<pad>".into()],
            item_category: vec![PAD],
            ..Default::default()
        }
    }

    pub fn build(records: &[InteractionRecord]) -> Self {
        let mut v = Vocab::new();
        for r in records {
            v.insert(r);
        }
        v
    }

    /// An item keeps the category it was first seen with.
    pub fn insert(&mut self, r: &InteractionRecord) -> (u32, Event) {
        let user = intern(&mut self.user_index, &mut self.users, &r.user_id);
        let category = intern(&mut self.category_index, &mut self.categories, &r.category_id);
        let before = self.items.len();
        let item = intern(&mut self.item_index, &mut self.items, &r.item_id);
        if self.items.len() > before {
            self.item_category.push(category);
        }
        (user, Event { item, category: self.item_category[item as usize], timestamp: r.timestamp })
    }

    /// Number of item rows, padding included (the `V` of the embedding table).
    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    /// Number of category indices, padding included.
    pub fn num_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn item(&self, id: &str) -> Option<u32> {
        self.item_index.get(id).copied()
    }

    pub fn user(&self, id: &str) -> Option<u32> {
        self.user_index.get(id).copied()
    }

    pub fn category(&self, id: &str) -> Option<u32> {
        self.category_index.get(id).copied()
    }

    pub fn item_name(&self, index: u32) -> &str {
        &self.items[index as usize]
    }

    pub fn user_name(&self, index: u32) -> &str {
        &self.users[index as usize]
    }

    pub fn category_of(&self, item: u32) -> u32 {
        self.item_category[item as usize]
    }

    pub fn item_categories(&self) -> &[u32] {
        &self.item_category
    }

    /// Builds the vocabulary and every user's time-sorted event sequence.
    ///
    /// Sequences are indexed by user; the sort is stable, so timestamp ties keep file order.
    pub fn index_log(records: &[InteractionRecord]) -> (Vocab, Vec<Vec<Event>>) {
        let mut vocab = Vocab::new();
        let mut per_user: Vec<Vec<Event>> = Vec::new();
        for r in records {
            let (user, ev) = vocab.insert(r);
            if per_user.len() <= user as usize {
                per_user.resize_with(user as usize + 1, Vec::new);
            }
            per_user[user as usize].push(ev);
        }
        for seq in &mut per_user {
            seq.sort_by_key(|e| e.timestamp);
        }
        (vocab, per_user)
    }
}
