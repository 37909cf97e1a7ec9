//! Built-in transcription sentences (lowercase letters and spaces).

pub const DEFAULT_PHRASES: &[&str] = &[
    "the cat sat on the warm mat",
    "please close the kitchen door",
    "we walked along the river",
    "my brother plays the drums",
    "rain is coming this evening",
    "she bought fresh bread today",
    "the meeting starts at noon",
    "turn left at the next light",
    "he forgot his keys again",
    "the garden needs more water",
    "our train was late again",
    "this soup tastes very good",
    "open the window a little",
    "the dog chased a red ball",
    "they moved to a new city",
    "call me when you get home",
    "the library closes early",
    "a quiet night in the woods",
    "bring a coat just in case",
    "the store sells fresh fish",
    "i will see you next week",
    "the baby fell asleep fast",
    "snow covered every street",
    "pick up milk on your way",
    "the movie was too long",
    "keep your phone charged",
    "the bus stops near school",
    "we need more paper cups",
    "the lamp on my desk broke",
    "lunch is ready in ten minutes",
    "the sky turned dark grey",
    "write your name on the form",
    "the old bridge was rebuilt",
    "he runs every morning",
    "add some salt to the pasta",
    "the printer is out of ink",
];
