//! Prompts sent to the multimodal LLM. Written for this engine; tune freely.

pub const SCENE_DESCRIBE: &str = "You are narrating a virtual reality scene for a blind user. \
Using the image and the list of detected objects below, give a concise summary of where \
the user is and what is around them, mentioning left, center or right where useful. \
Two sentences at most. Do not mention the detector.";

pub const ICON_DESCRIBE: &str = "Describe this small virtual reality interface element for a \
blind user in a few words: what it depicts or does. If it is a common icon, name it.";

pub const DETAIL_DESCRIBE: &str = "Describe the object near the user's hand in this virtual \
reality view: its color, its shape, and what it most likely is. One short sentence.";

pub const TONE_CLASSIFY: &str = "Classify the mood of this virtual reality scene as exactly one \
word from: neutral, cheerful, sad, fearful, urgent.";
