#include "mtlm/corpus.hpp"

namespace mtlm {

GrammarSpec default_grammar() {
  GrammarSpec g;
  g.intents = {
      {"play_music",
       {"play {song} by {artist}", "play some {artist}", "play {artist}", "i want to hear {song}",
        "put on {song} by {artist}", "play the song {song}", "can you play {artist} music",
        "shuffle songs by {artist}"}},
      {"get_weather",
       {"what is the weather in {city}", "what is the weather in {city} {day}", "will it rain in {city} {day}",
        "how cold is it in {city}", "weather forecast for {city} {day}", "is it sunny in {city}",
        "do i need an umbrella {day}"}},
      {"set_alarm",
       {"set an alarm for {time}", "set an alarm for {time} {day}", "wake me up at {time}",
        "wake me up at {time} {day}", "remind me at {time}", "cancel my alarm for {time}"}},
      {"order_food",
       {"order {dish}", "order some {dish} for {time}", "i want {dish} delivered to {place}", "get me {dish} {day}",
        "can you order {dish} for dinner", "find a restaurant that serves {dish} in {city}"}},
      {"navigate",
       {"navigate to {place}", "take me to {place}", "how do i get to {place} in {city}", "directions to {place}",
        "how long to drive to {place}", "find the fastest route to {place} {day}"}},
  };
  g.slots = {
      {"artist",
       {"the beatles", "adele", "drake", "queen", "coldplay", "madonna", "taylor swift", "rihanna", "nirvana",
        "metallica", "shakira", "prince", "daft punk", "oasis", "radiohead", "bjork", "enya", "sigur ros",
        "cocteau twins", "portishead"}},
      {"song",
       {"yesterday", "hello", "imagine", "thriller", "respect", "roar", "believe", "halo", "closer", "bad guy",
        "let it be", "faded", "hey jude", "wonderwall", "creep", "teardrop", "hoppipolla", "heartbeats", "jolene",
        "glosoli"}},
      {"city",
       {"london", "paris", "boston", "seattle", "chicago", "berlin", "tokyo", "new york", "madrid", "dublin",
        "denver", "austin", "toronto", "sydney", "rome", "reykjavik", "ushuaia", "tromso", "nuuk", "ulan bator"}},
      {"day",
       {"today", "tomorrow", "tonight", "monday", "tuesday", "wednesday", "thursday", "friday", "saturday",
        "sunday", "this weekend", "next week", "this morning", "this evening", "next month", "easter", "solstice",
        "equinox", "thanksgiving", "midsummer"}},
      {"time",
       {"seven", "eight", "six", "nine", "noon", "ten", "five", "midnight", "eleven", "seven thirty", "six thirty",
        "eight fifteen", "four", "three", "two", "quarter past four", "half past two", "dawn", "dusk",
        "twenty to nine"}},
      {"dish",
       {"pizza", "sushi", "pad thai", "burgers", "tacos", "ramen", "salad", "curry", "pasta", "noodles",
        "fried rice", "burritos", "dumplings", "pho", "falafel", "bibimbap", "injera", "pierogi", "ceviche",
        "shakshuka"}},
      {"place",
       {"the airport", "the station", "the mall", "home", "work", "the office", "the park", "the gym",
        "the library", "the hospital", "the beach", "the museum", "the stadium", "the bank", "school",
        "the planetarium", "the aquarium", "the observatory", "the crematorium", "the arboretum"}},
  };
  return g;
}

}  // namespace mtlm
