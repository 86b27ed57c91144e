//! Reserved token spellings.

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const SOS: &str = "<sos>";
pub const EOS: &str = "<eos>";

pub const EMAIL: &str = "<email>";
pub const URL: &str = "<url>";
pub const APP_NAME: &str = "<app_name>";
pub const USER_NAME: &str = "<user_name>";

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const SOS_ID: usize = 2;
pub const EOS_ID: usize = 3;

pub const SPECIALS: [&str; 4] = [PAD, UNK, SOS, EOS];
pub const PLACEHOLDERS: [&str; 4] = [EMAIL, URL, APP_NAME, USER_NAME];

/// `<cat:NAME>`
pub fn category_token(category: &str) -> String {
    format!("<cat:{category}>")
}
